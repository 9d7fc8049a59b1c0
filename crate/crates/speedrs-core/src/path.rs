//! Discrete paths on strictly increasing time grids.
//!
//! A [`Path`] is the universal sample object: a grid of time stamps together
//! with a row of d values per stamp. Grids are never assumed equidistant, so
//! irregularly subsampled data flows through the same code paths as regular
//! data.

use crate::error::{Error, Result};
use crate::rng::make_rng;
use rand::Rng;

/// A d-dimensional discrete path: strictly increasing times, one value row
/// per stamp. Immutable after construction; all operations return new paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    times: Vec<f64>,
    /// Row-major (len x dim).
    values: Vec<f64>,
    dim: usize,
}

impl Path {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if times.len() < 2 || dim == 0 || values.len() != times.len() * dim {
            return Err(Error::InvalidPath);
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidPath);
        }
        if !times.iter().chain(values.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPath);
        }
        Ok(Self { times, values, dim })
    }

    /// Convenience constructor for 1-d paths.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, 1)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // len >= 2 by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Prepends the time stamp as coordinate 0, yielding a (d+1)-dimensional
    /// path. Not idempotent: augmenting twice yields d+2 coordinates.
    pub fn augment_time(&self) -> Path {
        let d = self.dim + 1;
        let mut values = Vec::with_capacity(self.len() * d);
        for i in 0..self.len() {
            values.push(self.times[i]);
            values.extend_from_slice(self.row(i));
        }
        Path {
            times: self.times.clone(),
            values,
            dim: d,
        }
    }

    /// Rescales each coordinate so it starts at `target`; relative increments
    /// are preserved per coordinate. Fails if any coordinate starts at 0.
    pub fn normalize_start(&self, target: f64) -> Result<Path> {
        let first = self.row(0).to_vec();
        if let Some(j) = first.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroInitialValue(j));
        }
        let mut values = self.values.clone();
        for i in 0..self.len() {
            for j in 0..self.dim {
                values[i * self.dim + j] *= target / first[j];
            }
        }
        Ok(Path {
            times: self.times.clone(),
            values,
            dim: self.dim,
        })
    }

    /// Keeps the rows at `indices` (must be sorted, deduplicated, and include
    /// 0 and the last index). Time stamps are preserved, so the result is
    /// generally non-equidistant.
    pub fn subsample(&self, indices: &[usize]) -> Result<Path> {
        if indices.len() < 2 {
            return Err(Error::TooFewPoints);
        }
        let last = self.len() - 1;
        if indices[0] != 0 || *indices.last().unwrap() != last {
            return Err(Error::TooFewPoints);
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) || indices.iter().any(|&i| i > last) {
            return Err(Error::InvalidPath);
        }
        let times = indices.iter().map(|&i| self.times[i]).collect();
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Ok(Path {
            times,
            values,
            dim: self.dim,
        })
    }

    /// Irregular subsampling: each interior row is kept with probability
    /// `keep_prob`; endpoints are always kept. Deterministic per seed.
    pub fn subsample_irregular(&self, keep_prob: f64, seed: u64) -> Result<Path> {
        let mut rng = make_rng(seed);
        let last = self.len() - 1;
        let mut indices = vec![0];
        for i in 1..last {
            if rng.gen::<f64>() < keep_prob {
                indices.push(i);
            }
        }
        indices.push(last);
        self.subsample(&indices)
    }

    /// Restricts the path to [t0, t]. If `t` falls inside a segment, a
    /// linearly interpolated row at `t` is appended so the output grid is
    /// explicit.
    pub fn restrict_window(&self, t: f64) -> Result<Path> {
        if t < self.times[1] {
            return Err(Error::WindowTooShort(t));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.len() {
            if self.times[i] <= t {
                times.push(self.times[i]);
                values.extend_from_slice(self.row(i));
            } else {
                let w = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1]);
                times.push(t);
                for j in 0..self.dim {
                    let a = self.value(i - 1, j);
                    let b = self.value(i, j);
                    values.push(a + w * (b - a));
                }
                break;
            }
        }
        Ok(Path {
            times,
            values,
            dim: self.dim,
        })
    }

    /// Projects onto the single value coordinate `j`.
    pub fn marginal(&self, j: usize) -> Result<Path> {
        if j >= self.dim {
            return Err(Error::IndexOutOfRange {
                index: j,
                dim: self.dim,
            });
        }
        let values = (0..self.len()).map(|i| self.value(i, j)).collect();
        Ok(Path {
            times: self.times.clone(),
            values,
            dim: 1,
        })
    }
}

/// A nonempty collection of same-dimension paths sampled from one stochastic
/// model, tagged with the spec id and seed it was generated from.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub paths: Vec<Path>,
    pub spec_id: String,
    pub seed: u64,
}

impl PathBundle {
    pub fn new(paths: Vec<Path>, spec_id: impl Into<String>, seed: u64) -> Result<Self> {
        let dim = match paths.first() {
            Some(p) => p.dim(),
            None => return Err(Error::EmptyBundle),
        };
        if paths.iter().any(|p| p.dim() != dim) {
            return Err(Error::DimMismatch(dim, 0));
        }
        Ok(Self {
            paths,
            spec_id: spec_id.into(),
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Marginal bundle for coordinate `j`.
    pub fn marginal(&self, j: usize) -> Result<PathBundle> {
        let paths = self
            .paths
            .iter()
            .map(|p| p.marginal(j))
            .collect::<Result<Vec<_>>>()?;
        Ok(PathBundle {
            paths,
            spec_id: self.spec_id.clone(),
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> Path {
        Path::scalar(vec![0.0, 1.0], vec![5.0, 7.0]).unwrap()
    }

    #[test]
    fn construction_rejects_degenerate_inputs() {
        assert!(Path::scalar(vec![0.0], vec![1.0]).is_err());
        assert!(Path::scalar(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Path::scalar(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Path::scalar(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn augment_time_prepends_times() {
        let a = p2().augment_time();
        assert_eq!(a.dim(), 2);
        assert_eq!(a.row(0), &[0.0, 5.0]);
        assert_eq!(a.row(1), &[1.0, 7.0]);
        // augmenting twice yields d+2 by design
        assert_eq!(a.augment_time().dim(), 3);
    }

    #[test]
    fn normalize_start_examples() {
        let p = Path::scalar(vec![0.0, 1.0], vec![90.0, 99.0]).unwrap();
        let n = p.normalize_start(1.0).unwrap();
        assert_eq!(n.values(), &[1.0, 1.1]);
        // already normalized -> unchanged
        let again = n.normalize_start(1.0).unwrap();
        assert_eq!(again.values(), n.values());
        // zero start fails
        let z = Path::scalar(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            z.normalize_start(1.0),
            Err(Error::ZeroInitialValue(0))
        ));
    }

    #[test]
    fn normalize_preserves_ratios() {
        let p = Path::scalar(vec![0.0, 1.0, 2.0], vec![90.0, 95.0, 80.0]).unwrap();
        let n = p.normalize_start(1.0).unwrap();
        for i in 0..p.len() {
            let r0 = p.value(i, 0) / p.value(0, 0);
            let r1 = n.value(i, 0) / n.value(0, 0);
            assert!((r0 - r1).abs() <= 1e-12 * r0.abs());
        }
    }

    #[test]
    fn subsample_endpoints_and_identity() {
        let p = Path::scalar(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = p.subsample(&[0, 1, 2, 3]).unwrap();
        assert_eq!(id, p);
        let ends = p.subsample(&[0, 3]).unwrap();
        assert_eq!(ends.times(), &[0.0, 3.0]);
        assert_eq!(ends.values(), &[1.0, 4.0]);
        assert!(p.subsample(&[0, 1]).is_err()); // must include last
    }

    #[test]
    fn irregular_subsample_replays_with_seed() {
        let times: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let vals: Vec<f64> = (0..50).map(|i| (i * i) as f64 + 1.0).collect();
        let p = Path::scalar(times, vals).unwrap();
        let a = p.subsample_irregular(0.6, 99).unwrap();
        let b = p.subsample_irregular(0.6, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times()[0], 0.0);
        assert_eq!(*a.times().last().unwrap(), 49.0);
    }

    #[test]
    fn restrict_window_interpolates_midpoint() {
        let p = Path::scalar(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 5.0]).unwrap();
        let full = p.restrict_window(2.0).unwrap();
        assert_eq!(full, p);
        let half = p.restrict_window(1.5).unwrap();
        assert_eq!(half.times(), &[0.0, 1.0, 1.5]);
        assert_eq!(half.values(), &[1.0, 3.0, 4.0]);
        assert!(p.restrict_window(0.5).is_err());
    }

    #[test]
    fn restrict_window_composes() {
        let p = Path::scalar(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 4.0, 2.0, 8.0]).unwrap();
        let a = p.restrict_window(2.5).unwrap().restrict_window(1.5).unwrap();
        let b = p.restrict_window(1.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_commutes_with_augment() {
        let p = Path::new(vec![0.0, 1.0], vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(p.marginal(1).unwrap().values(), &[2.0, 4.0]);
        assert!(p.marginal(2).is_err());
        // marginal then augment == augment then select columns {0, j+1}
        let left = p.marginal(1).unwrap().augment_time();
        let aug = p.augment_time();
        for i in 0..p.len() {
            assert_eq!(left.row(i), &[aug.value(i, 0), aug.value(i, 2)]);
        }
    }
}
