//! Trajectory storage, time-shifted data matrices and snapshot persistence.
//!
//! Snapshots are stored column-major: column `i` of the state matrix is the
//! state at `t_i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::{ColRef, Mat, MatRef};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DMDS";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 + 8;

/// Uniform time grid `t_i = t0 + i·dt`, `i = 0..count`.
///
/// The grid remembers the origin it was sliced from, so nested slices land
/// on bit-identical times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    origin: f64,
    offset: usize,
    dt: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, count: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::Config(format!("time grid needs finite t0 and dt > 0, got t0={t0}, dt={dt}")));
        }
        if count < 2 {
            return Err(Error::InsufficientData(format!("time grid needs at least 2 points, got {count}")));
        }
        Ok(Self { origin: t0, offset: 0, dt, count })
    }

    pub fn t0(&self) -> f64 {
        self.time(0)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Time of grid point `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.origin + (self.offset + i) as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.count - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.time(i)).collect()
    }

    fn window(&self, i0: usize, len: usize) -> Self {
        Self {
            origin: self.origin,
            offset: self.offset + i0,
            dt: self.dt,
            count: len,
        }
    }
}

/// Time-ordered states on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    grid: TimeGrid,
    states: Mat<f64>,
}

impl SnapshotSet {
    /// Wrap a `dim × count` state matrix.
    pub fn from_matrix(grid: TimeGrid, states: Mat<f64>) -> Result<Self> {
        if states.ncols() != grid.count() {
            return Err(Error::Config(format!(
                "{} states for a grid of {} points",
                states.ncols(),
                grid.count()
            )));
        }
        if states.nrows() == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        for j in 0..states.ncols() {
            if states.col(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateInput(format!("non-finite entry in state {j}")));
            }
        }
        Ok(Self { grid, states })
    }

    /// Build from one vector per grid point.
    pub fn from_states(grid: TimeGrid, states: &[Vec<f64>]) -> Result<Self> {
        if states.len() != grid.count() {
            return Err(Error::Config(format!(
                "{} states for a grid of {} points",
                states.len(),
                grid.count()
            )));
        }
        let dim = states.first().map_or(0, Vec::len);
        if let Some((j, s)) = states.iter().enumerate().find(|(_, s)| s.len() != dim) {
            return Err(Error::Config(format!("state {j} has length {}, expected {dim}", s.len())));
        }
        Self::from_matrix(grid, Mat::from_fn(dim, states.len(), |i, j| states[j][i]))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, i: usize) -> ColRef<'_, f64> {
        self.states.col(i)
    }

    pub fn state_vec(&self, i: usize) -> Vec<f64> {
        self.state(i).iter().copied().collect()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.states.as_ref()
    }

    /// Contiguous sub-trajectory of `len` states starting at `i0`.
    pub fn slice_window(&self, i0: usize, len: usize) -> Result<Self> {
        let end = i0.checked_add(len).filter(|&e| e <= self.len());
        if end.is_none() {
            return Err(Error::Index(format!(
                "window [{i0}, {i0}+{len}) exceeds {} snapshots",
                self.len()
            )));
        }
        if len < 2 {
            return Err(Error::InsufficientData(format!("window of {len} snapshots")));
        }
        Ok(Self {
            grid: self.grid.window(i0, len),
            states: self.states.get(.., i0..i0 + len).to_owned(),
        })
    }

    /// Index of the grid point closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let k = ((t - self.grid.t0()) / self.grid.dt()).round();
        (k.max(0.0) as usize).min(self.len() - 1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Little-endian binary: magic, version, dim, count, t0, dt, values.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.grid.t0().to_le_bytes())?;
        w.write_all(&self.grid.dt().to_le_bytes())?;
        for j in 0..self.len() {
            for &v in self.state(j).iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(truncated)?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let t0 = f64::from_le_bytes(header[24..32].try_into().unwrap());
        let dt = f64::from_le_bytes(header[32..40].try_into().unwrap());
        let grid = TimeGrid::new(t0, dt, count).map_err(|e| Error::Format(e.to_string()))?;
        let total = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        let mut bytes = vec![0u8; total];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let states = Mat::from_fn(dim, count, |i, j| {
            let k = 8 * (j * dim + i);
            f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap())
        });
        Self::from_matrix(grid, states).map_err(|e| Error::Format(e.to_string()))
    }

    /// CSV with header `t,c0,c1,...` and one row per snapshot.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "t")?;
        for i in 0..self.dim() {
            write!(w, ",c{i}")?;
        }
        writeln!(w)?;
        for j in 0..self.len() {
            write!(w, "{}", self.grid.time(j))?;
            for v in self.state(j).iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Time-shifted data matrices `X = [u_1 … u_m]`, `Y = [u_2 … u_{m+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub x: Mat<f64>,
    pub y: Mat<f64>,
}

impl DataPair {
    pub fn new(x: Mat<f64>, y: Mat<f64>) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::Config(format!(
                "X is {:?} but Y is {:?}",
                x.shape(),
                y.shape()
            )));
        }
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(Error::InsufficientData("empty data matrices".into()));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Number of snapshot pairs `m`.
    pub fn pairs(&self) -> usize {
        self.x.ncols()
    }
}

pub fn build_data_pair(s: &SnapshotSet) -> Result<DataPair> {
    let m = s.len().checked_sub(1).filter(|&m| m > 0).ok_or_else(|| {
        Error::InsufficientData(format!("need at least 2 snapshots, got {}", s.len()))
    })?;
    let x = s.matrix().get(.., 0..m).to_owned();
    let y = s.matrix().get(.., 1..m + 1).to_owned();
    DataPair::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(dim: usize, count: usize) -> SnapshotSet {
        let grid = TimeGrid::new(0.5, 0.25, count).unwrap();
        let states = Mat::from_fn(dim, count, |i, j| ((i * 13 + j * 7) % 17) as f64 - 8.5);
        SnapshotSet::from_matrix(grid, states).unwrap()
    }

    #[test]
    fn data_pair_is_time_shift() {
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let s = SnapshotSet::from_states(grid, &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let d = build_data_pair(&s).unwrap();
        assert_eq!(d.pairs(), 2);
        assert_eq!(d.x.col(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(d.x.col(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(d.y.col(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(d.y.col(1).iter().copied().collect::<Vec<_>>(), vec![5.0, 6.0]);
    }

    #[test]
    fn single_state_is_rejected() {
        assert!(matches!(TimeGrid::new(0.0, 1.0, 1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn non_uniform_or_bad_step_rejected() {
        assert!(TimeGrid::new(0.0, 0.0, 5).is_err());
        assert!(TimeGrid::new(0.0, -1.0, 5).is_err());
        assert!(TimeGrid::new(f64::NAN, 1.0, 5).is_err());
    }

    #[test]
    fn non_finite_states_rejected() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let r = SnapshotSet::from_states(grid, &[vec![1.0], vec![f64::INFINITY]]);
        assert!(matches!(r, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn full_slice_is_identity() {
        let s = sample(4, 9);
        assert_eq!(s.slice_window(0, 9).unwrap(), s);
    }

    #[test]
    fn slicing_into_windows() {
        let grid = TimeGrid::new(0.0, 0.01, 801).unwrap();
        let s = SnapshotSet::from_matrix(grid, Mat::from_fn(3, 801, |i, j| (i + j) as f64)).unwrap();
        let windows: Vec<_> = (0..160).map(|k| s.slice_window(5 * k, 6).unwrap()).collect();
        assert_eq!(windows.len(), 160);
        assert!(windows.iter().all(|w| w.len() == 6));
        assert_eq!(windows[159].grid().t_final(), s.grid().t_final());
        assert!((windows[1].grid().t0() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn slice_out_of_range() {
        let s = sample(2, 5);
        assert!(matches!(s.slice_window(3, 3), Err(Error::Index(_))));
        assert!(matches!(s.slice_window(usize::MAX, 3), Err(Error::Index(_))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = TimeGrid::new(-0.0, 0.1, 5).unwrap();
        let mut states = Mat::from_fn(10, 5, |i, j| ((i as f64) * 0.37 - (j as f64) * 1.3).sin() / 3.0);
        states[(0, 0)] = -0.0;
        states[(1, 1)] = f64::MIN_POSITIVE / 4.0;
        let s = SnapshotSet::from_matrix(grid, states).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 8 * 50);
        let back = SnapshotSet::read_from(&mut buf.as_slice()).unwrap();
        for j in 0..5 {
            for i in 0..10 {
                assert_eq!(back.state(j)[i].to_bits(), s.state(j)[i].to_bits());
            }
        }
        assert_eq!(back.grid().t0().to_bits(), s.grid().t0().to_bits());
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let s = sample(3, 4);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(SnapshotSet::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(SnapshotSet::read_from(&mut &short[..]), Err(Error::Format(_))));
        let mut wrong_version = buf.clone();
        wrong_version[4] = 9;
        assert!(matches!(SnapshotSet::read_from(&mut wrong_version.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::new(0.0, 0.5, 2).unwrap();
        let s = SnapshotSet::from_states(grid, &[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,c0,c1\n0,1,2\n0.5,3,4.5\n");
    }

    proptest! {
        #[test]
        fn pair_reassembles_states(dim in 1usize..6, count in 2usize..12, seed in 0u64..1000) {
            let grid = TimeGrid::new(0.0, 1.0, count).unwrap();
            let states = Mat::from_fn(dim, count, |i, j| ((seed as f64 + 1.0) * (i as f64 + 0.3) * (j as f64 + 0.7)).sin());
            let s = SnapshotSet::from_matrix(grid, states).unwrap();
            let d = build_data_pair(&s).unwrap();
            for j in 0..count - 1 {
                for i in 0..dim {
                    prop_assert_eq!(d.x[(i, j)].to_bits(), s.state(j)[i].to_bits());
                    prop_assert_eq!(d.y[(i, j)].to_bits(), s.state(j + 1)[i].to_bits());
                }
            }
        }

        #[test]
        fn nested_slices_compose(count in 6usize..30, a in 0usize..4, b in 0usize..2) {
            let s = sample(2, count);
            let l1 = count - a;
            let l2 = 2.max(l1 - b - 1);
            let nested = s.slice_window(a, l1).unwrap().slice_window(b, l2).unwrap();
            let direct = s.slice_window(a + b, l2).unwrap();
            prop_assert_eq!(nested, direct);
        }

        #[test]
        fn binary_round_trip(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::SUBNORMAL, 6..=6)) {
            let grid = TimeGrid::new(1.0, 0.5, 3).unwrap();
            let s = SnapshotSet::from_matrix(grid, Mat::from_fn(2, 3, |i, j| vals[j * 2 + i])).unwrap();
            let mut buf = Vec::new();
            s.write_to(&mut buf).unwrap();
            let back = SnapshotSet::read_from(&mut buf.as_slice()).unwrap();
            for j in 0..3 {
                for i in 0..2 {
                    prop_assert_eq!(back.state(j)[i].to_bits(), s.state(j)[i].to_bits());
                }
            }
        }
    }
}
