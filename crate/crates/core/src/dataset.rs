//! Gridded sample data: raw per-point feature vectors ([`SampleSet`]), the
//! train/validation view used for training ([`GriddedDataset`]), and the
//! on-disk formats.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic              4 bytes  "LBCD"
//! version            u16      1
//! grid points        u32      K + 1
//! samples per point  u32      M
//! feature length     u32      D
//! grid values        f64 × (K + 1)
//! features           f32 × (K + 1) · M · D, grouped by grid point, row-major
//! ```
//!
//! CSV layout: one sample per row, `grid_index,f_0,f_1,…`. Blank lines and
//! lines starting with `#` are ignored, as is a first line whose first field
//! is `grid_index`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::confusion::ParameterGrid;
use crate::error::{format_err, usage, Error, Result};
use crate::Rng;

pub const DATASET_MAGIC: &[u8; 4] = b"LBCD";
pub const DATASET_VERSION: u16 = 1;

/// Feature vectors collected at each grid point, before any train/validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    grid: ParameterGrid,
    feature_dim: usize,
    /// `points[p]` is a row-major `M_p × feature_dim` block.
    points: Vec<Vec<f32>>,
}

impl SampleSet {
    pub fn new(grid: ParameterGrid, feature_dim: usize, points: Vec<Vec<f32>>) -> Result<Self> {
        if feature_dim == 0 {
            return Err(usage!("feature length must be positive"));
        }
        if points.len() != grid.len() {
            return Err(usage!("{} sample blocks for a grid of {} points", points.len(), grid.len()));
        }
        for (p, block) in points.iter().enumerate() {
            if block.is_empty() || block.len() % feature_dim != 0 {
                return Err(usage!(
                    "grid point {p} holds {} values, not a positive multiple of the feature length {feature_dim}",
                    block.len()
                ));
            }
        }
        Ok(Self { grid, feature_dim, points })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn samples_at(&self, point: usize) -> usize {
        self.points[point].len() / self.feature_dim
    }

    pub fn total_samples(&self) -> usize {
        (0..self.grid.len()).map(|p| self.samples_at(p)).sum()
    }

    /// Rows recorded at one grid point.
    pub fn rows(&self, point: usize) -> impl Iterator<Item = &[f32]> {
        self.points[point].chunks_exact(self.feature_dim)
    }

    /// Common per-point sample count, if all points have the same number.
    pub fn uniform_samples_per_point(&self) -> Option<usize> {
        let m = self.samples_at(0);
        (1..self.grid.len()).all(|p| self.samples_at(p) == m).then_some(m)
    }

    /// Keeps only the listed grid points (ascending) together with their samples.
    pub fn select_points(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.grid.len()) {
            return Err(usage!("grid point index out of range"));
        }
        let grid = ParameterGrid::new(indices.iter().map(|&i| self.grid.values()[i]).collect())?;
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        Self::new(grid, self.feature_dim, points)
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let m = self
            .uniform_samples_per_point()
            .ok_or_else(|| usage!("binary datasets need the same number of samples at every grid point"))?;
        let as_u32 = |v: usize| u32::try_from(v).map_err(|_| usage!("{v} does not fit in u32"));
        w.write_all(DATASET_MAGIC)?;
        w.write_u16::<LE>(DATASET_VERSION)?;
        w.write_u32::<LE>(as_u32(self.grid.len())?)?;
        w.write_u32::<LE>(as_u32(m)?)?;
        w.write_u32::<LE>(as_u32(self.feature_dim)?)?;
        for &t in self.grid.values() {
            w.write_f64::<LE>(t)?;
        }
        let mut buf = Vec::with_capacity(m * self.feature_dim * 4);
        for block in &self.points {
            buf.clear();
            for &v in block {
                buf.write_f32::<LE>(v)?;
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let eof = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => format_err!("dataset file is truncated"),
            _ => Error::Io(e),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != DATASET_MAGIC {
            return Err(format_err!("not a dataset file (bad magic {magic:?})"));
        }
        let version = r.read_u16::<LE>().map_err(eof)?;
        if version != DATASET_VERSION {
            return Err(format_err!("unsupported dataset version {version}"));
        }
        let n = r.read_u32::<LE>().map_err(eof)? as usize;
        let m = r.read_u32::<LE>().map_err(eof)? as usize;
        let d = r.read_u32::<LE>().map_err(eof)? as usize;
        let mut grid = vec![0.0; n];
        r.read_f64_into::<LE>(&mut grid).map_err(eof)?;
        let grid = ParameterGrid::new(grid).map_err(|e| format_err!("invalid grid in dataset header: {e}"))?;
        let points = (0..n)
            .map(|_| {
                let mut block = vec![0.0f32; m * d];
                r.read_f32_into::<LE>(&mut block).map_err(eof)?;
                Ok(block)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, d, points).map_err(|e| format_err!("{e}"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_binary(&mut r)
    }

    /// Parses the CSV layout. With `grid = None` the grid values are the
    /// point indices `0, 1, …`.
    pub fn read_csv<R: Read>(r: R, grid: Option<ParameterGrid>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::new();
        let mut feature_dim = None;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| format_err!("CSV row {}: {e}", i + 1))?;
            let line = record.position().map_or(i as u64 + 1, |p| p.line());
            if record.iter().all(str::is_empty) {
                continue;
            }
            if rows.is_empty() && feature_dim.is_none() && record.get(0) == Some("grid_index") {
                continue;
            }
            let index = record
                .get(0)
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| format_err!("CSV line {line}: first field must be a grid index"))?;
            let features = record
                .iter()
                .skip(1)
                .map(|s| s.parse::<f32>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| format_err!("CSV line {line}: non-numeric feature value"))?;
            match feature_dim {
                None if features.is_empty() => return Err(format_err!("CSV line {line}: no feature values")),
                None => feature_dim = Some(features.len()),
                Some(d) if d != features.len() => {
                    return Err(format_err!("CSV line {line}: ragged row with {} features, expected {d}", features.len()))
                }
                Some(_) => {}
            }
            rows.push((index, features));
        }
        let feature_dim = feature_dim.ok_or_else(|| format_err!("CSV input contains no samples"))?;
        let n_points = match &grid {
            Some(g) => g.len(),
            None => rows.iter().map(|r| r.0).max().unwrap_or(0) + 1,
        };
        let mut points = vec![Vec::new(); n_points];
        for (index, features) in rows {
            if index >= n_points {
                return Err(format_err!("grid index {index} outside a grid of {n_points} points"));
            }
            points[index].extend(features);
        }
        if let Some(p) = points.iter().position(Vec::is_empty) {
            return Err(format_err!("grid point {p} has no samples"));
        }
        let grid = match grid {
            Some(g) => g,
            None => ParameterGrid::new((0..n_points).map(|i| i as f64).collect())
                .map_err(|e| format_err!("CSV input: {e}"))?,
        };
        Self::new(grid, feature_dim, points)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "grid_index,{}", (0..self.feature_dim).map(|i| format!("f{i}")).collect::<Vec<_>>().join(","))?;
        for p in 0..self.grid.len() {
            for row in self.rows(p) {
                write!(w, "{p}")?;
                for v in row {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// How samples at each grid point are divided into train and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// First `train` samples for training, the next `valid` for validation.
    Fixed { train: usize, valid: usize },
    /// Per-point random permutation (seeded) before taking `train` then `valid`.
    Shuffled { train: usize, valid: usize, seed: u64 },
}

/// Samples of one partition pooled across grid points, rows grouped by point.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub features: Array2<f64>,
    pub grid_index: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.grid_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_index.is_empty()
    }

    pub fn counts_per_point(&self, n_points: usize) -> Vec<usize> {
        let mut counts = vec![0; n_points];
        for &g in &self.grid_index {
            counts[g] += 1;
        }
        counts
    }

    /// Rows belonging to one grid point.
    pub fn rows_at(&self, point: usize) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.features.axis_iter(Axis(0)).zip(&self.grid_index).filter(move |(_, &g)| g == point).map(|(r, _)| r)
    }
}

/// Train and validation partitions on a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDataset {
    grid: ParameterGrid,
    pub train: Partition,
    pub valid: Partition,
}

impl GriddedDataset {
    pub fn from_samples(samples: &SampleSet, split: SplitMode) -> Result<Self> {
        let (n_train, n_valid, seed) = match split {
            SplitMode::Fixed { train, valid } => (train, valid, None),
            SplitMode::Shuffled { train, valid, seed } => (train, valid, Some(seed)),
        };
        if n_train == 0 || n_valid == 0 {
            return Err(usage!("every grid point needs at least one training and one validation sample"));
        }
        let mut rng = seed.map(Rng::seed_from_u64);
        let d = samples.feature_dim();
        let n_points = samples.grid().len();
        let mut train = (Vec::with_capacity(n_points * n_train * d), Vec::with_capacity(n_points * n_train));
        let mut valid = (Vec::with_capacity(n_points * n_valid * d), Vec::with_capacity(n_points * n_valid));
        for p in 0..n_points {
            let available = samples.samples_at(p);
            if available < n_train + n_valid {
                return Err(usage!(
                    "grid point {p} has {available} samples, fewer than the requested {n_train} + {n_valid}"
                ));
            }
            let mut order: Vec<usize> = (0..available).collect();
            if let Some(rng) = rng.as_mut() {
                order.shuffle(rng);
            }
            let block = &samples.points[p];
            for (slot, &i) in order[..n_train + n_valid].iter().enumerate() {
                let target = if slot < n_train { &mut train } else { &mut valid };
                target.0.extend(block[i * d..(i + 1) * d].iter().map(|&v| f64::from(v)));
                target.1.push(p);
            }
        }
        let pack = |(values, index): (Vec<f64>, Vec<usize>)| -> Result<Partition> {
            let features = Array2::from_shape_vec((index.len(), d), values).map_err(|e| usage!("{e}"))?;
            Ok(Partition { features, grid_index: index })
        };
        Ok(Self { grid: samples.grid().clone(), train: pack(train)?, valid: pack(valid)? })
    }

    /// Builds a dataset from explicit partitions (rows in any order).
    pub fn from_partitions(grid: ParameterGrid, train: Partition, valid: Partition) -> Result<Self> {
        let d = train.features.ncols();
        for (name, part) in [("training", &train), ("validation", &valid)] {
            if part.features.nrows() != part.grid_index.len() || part.features.ncols() != d || d == 0 {
                return Err(usage!("{name} partition has inconsistent shape"));
            }
            if part.grid_index.iter().any(|&g| g >= grid.len()) {
                return Err(usage!("{name} partition references a grid point outside the grid"));
            }
            if let Some(p) = part.counts_per_point(grid.len()).iter().position(|&c| c == 0) {
                return Err(usage!("grid point {p} has no {name} samples"));
            }
        }
        Ok(Self { grid, train, valid })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn feature_dim(&self) -> usize {
        self.train.features.ncols()
    }

    /// Number of splittings `K`.
    pub fn n_splittings(&self) -> usize {
        self.grid.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use proptest::prelude::*;

    fn toy() -> SampleSet {
        let grid = ParameterGrid::new(vec![0.5, 1.0, 2.5]).unwrap();
        let points = (0..3).map(|p| (0..16).map(|i| (p * 100 + i) as f32).collect()).collect();
        SampleSet::new(grid, 2, points).unwrap()
    }

    #[test]
    fn binary_round_trip_and_header() {
        let set = toy();
        let mut bytes = Vec::new();
        set.write_binary(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"LBCD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[18..26].try_into().unwrap()), 0.5);
        assert_eq!(bytes.len(), 18 + 3 * 8 + 3 * 8 * 2 * 4);
        assert_eq!(SampleSet::read_binary(&mut bytes.as_slice()).unwrap(), set);
    }

    #[test]
    fn truncated_binary_is_format_error() {
        let mut bytes = Vec::new();
        toy().write_binary(&mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(SampleSet::read_binary(&mut bytes.as_slice()), Err(Error::Format(_))));
        assert!(matches!(SampleSet::read_binary(&mut &b"LBCX"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_round_trip() {
        let set = toy();
        let mut text = Vec::new();
        set.write_csv(&mut text).unwrap();
        let back = SampleSet::read_csv(text.as_slice(), Some(set.grid().clone())).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad = "0,1,2\n1,3,4\n1,5,oops\n";
        let err = SampleSet::read_csv(bad.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("line 3"), "{err}");

        let ragged = "0,1,2\n1,3\n";
        let err = SampleSet::read_csv(ragged.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("ragged"), "{err}");

        let grid = ParameterGrid::new(vec![1.0, 2.0]).unwrap();
        let outside = "0,1\n2,1\n";
        assert!(SampleSet::read_csv(outside.as_bytes(), Some(grid.clone())).is_err());
        let missing = "0,1\n0,2\n";
        assert!(SampleSet::read_csv(missing.as_bytes(), Some(grid)).is_err());
    }

    #[test]
    fn csv_default_grid_and_comments() {
        let text = "grid_index,a\n# comment\n0,1\n\n1,2\n1,3\n";
        let set = SampleSet::read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(set.grid().values(), &[0.0, 1.0]);
        assert_eq!(set.samples_at(1), 2);
        assert!(set.uniform_samples_per_point().is_none());
        assert!(set.write_binary(&mut Vec::new()).is_err());
    }

    #[test]
    fn fixed_split_takes_leading_samples() {
        let ds = GriddedDataset::from_samples(&toy(), SplitMode::Fixed { train: 3, valid: 5 }).unwrap();
        assert_eq!(ds.train.counts_per_point(3), vec![3, 3, 3]);
        assert_eq!(ds.valid.counts_per_point(3), vec![5, 5, 5]);
        assert_eq!(ds.train.features[[0, 0]], 0.0);
        assert_eq!(ds.valid.features[[0, 0]], 6.0);
        assert_eq!(ds.n_splittings(), 2);
        assert!(GriddedDataset::from_samples(&toy(), SplitMode::Fixed { train: 5, valid: 4 }).is_err());
        assert!(GriddedDataset::from_samples(&toy(), SplitMode::Fixed { train: 3, valid: 0 }).is_err());
    }

    #[test]
    fn shuffled_split_is_seeded_partition() {
        let a = GriddedDataset::from_samples(&toy(), SplitMode::Shuffled { train: 4, valid: 4, seed: 1 }).unwrap();
        let b = GriddedDataset::from_samples(&toy(), SplitMode::Shuffled { train: 4, valid: 4, seed: 1 }).unwrap();
        let c = GriddedDataset::from_samples(&toy(), SplitMode::Shuffled { train: 4, valid: 4, seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // every original sample of point 1 appears exactly once
        let mut seen: Vec<f64> = a.train.rows_at(1).chain(a.valid.rows_at(1)).map(|r| r[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..8).map(|i| (100 + 2 * i) as f64).collect::<Vec<_>>());
    }

    #[test]
    fn twenty_seven_images_per_year() {
        let grid = ParameterGrid::new((1900..2050).map(f64::from).collect()).unwrap();
        let points = (0..150).map(|_| vec![0.0f32; 27 * 3]).collect();
        let set = SampleSet::new(grid, 3, points).unwrap();
        let ds = GriddedDataset::from_samples(&set, SplitMode::Fixed { train: 16, valid: 11 }).unwrap();
        assert_eq!(ds.n_splittings(), 149);
        assert_eq!(ds.train.len(), 150 * 16);
        assert_eq!(ds.valid.len(), 150 * 11);
    }

    proptest! {
        #[test]
        fn binary_round_trip(n in 2usize..5, m in 1usize..4, d in 1usize..5, seed in any::<u64>()) {
            use rand::Rng as _;
            let mut rng = Rng::seed_from_u64(seed);
            let grid = ParameterGrid::new((0..n).map(|i| i as f64 * 0.7 + rng.gen::<f64>() * 0.1).collect()).unwrap();
            let points = (0..n).map(|_| (0..m * d).map(|_| rng.gen::<f32>() * 4.0 - 2.0).collect()).collect();
            let set = SampleSet::new(grid, d, points).unwrap();
            let mut bytes = Vec::new();
            set.write_binary(&mut bytes).unwrap();
            prop_assert_eq!(SampleSet::read_binary(&mut bytes.as_slice()).unwrap(), set);
        }
    }
}
