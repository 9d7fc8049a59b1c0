//! Truncated path signatures.
//!
//! Signatures of piecewise-linear paths are computed exactly: each segment
//! contributes the tensor exponential of its increment and segments combine
//! through Chen's identity. Storage is graded (one block per level) so the
//! Chen product never does flat-index arithmetic; flattening is a separate
//! step with lexicographic word order (word (k1,..,kj) sits at offset
//! sum_i k_i * d^(j-i)).

use crate::error::{Error, Result};
use crate::path::{Path, PathBundle};

/// Signature truncated at `level`: block k holds the d^k level-k tensor
/// coefficients, block 0 is the scalar 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSig {
    dim: usize,
    level: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedSig {
    /// The multiplicative unit: (1, 0, 0, ...).
    pub fn identity(dim: usize, level: usize) -> Self {
        let mut levels = vec![vec![1.0]];
        let mut size = 1;
        for _ in 1..=level {
            size *= dim;
            levels.push(vec![0.0; size]);
        }
        Self { dim, level, levels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn level_block(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    /// Flattened coefficients, excluding the constant level-0 term; length is
    /// d + d^2 + ... + d^L.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(flat_len(self.dim, self.level));
        for block in &self.levels[1..] {
            out.extend_from_slice(block);
        }
        out
    }
}

/// d + d^2 + ... + d^L, the flattened length excluding level 0.
pub fn flat_len(dim: usize, level: usize) -> usize {
    let mut total = 0;
    let mut size = 1;
    for _ in 1..=level {
        size *= dim;
        total += size;
    }
    total
}

/// Signature of a single linear segment: the tensor exponential of its
/// increment, level k = increment^(tensor k) / k!.
pub fn segment_signature(increment: &[f64], level: usize) -> TruncatedSig {
    let dim = increment.len();
    let mut levels = vec![vec![1.0]];
    for k in 1..=level {
        let prev = &levels[k - 1];
        let mut block = Vec::with_capacity(prev.len() * dim);
        for &p in prev {
            for &inc in increment {
                block.push(p * inc / k as f64);
            }
        }
        levels.push(block);
    }
    TruncatedSig { dim, level, levels }
}

/// Chen product: level-k block of the result is sum_{i+j=k} a_i (tensor) b_j.
pub fn chen_product(a: &TruncatedSig, b: &TruncatedSig) -> Result<TruncatedSig> {
    if a.dim != b.dim || a.level != b.level {
        return Err(Error::DimMismatch(a.dim, b.dim));
    }
    let mut out = TruncatedSig::identity(a.dim, a.level);
    for k in 1..=a.level {
        let block = &mut out.levels[k];
        for i in 0..=k {
            let j = k - i;
            let ai = &a.levels[i];
            let bj = &b.levels[j];
            let bn = bj.len();
            for (p, &av) in ai.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let base = p * bn;
                for (q, &bv) in bj.iter().enumerate() {
                    block[base + q] += av * bv;
                }
            }
        }
    }
    Ok(out)
}

/// Signature of a piecewise-linear path: left-to-right Chen product of the
/// segment tensor exponentials.
pub fn signature_truncated(p: &Path, level: usize) -> TruncatedSig {
    let d = p.dim();
    let mut acc = TruncatedSig::identity(d, level);
    let mut inc = vec![0.0; d];
    for i in 1..p.len() {
        for j in 0..d {
            inc[j] = p.value(i, j) - p.value(i - 1, j);
        }
        let seg = segment_signature(&inc, level);
        acc = chen_product(&acc, &seg).expect("dims match by construction");
    }
    acc
}

/// Static lift applied before signature computation: value coordinates map
/// through v -> exp(-v^2), the time coordinate (column 0) passes through so
/// the parametrization stays monotone. Expects a time-augmented path.
pub fn kernelize_path(p: &Path) -> Path {
    let d = p.dim();
    let mut values = Vec::with_capacity(p.len() * d);
    for i in 0..p.len() {
        values.push(p.value(i, 0));
        for j in 1..d {
            let v = p.value(i, j);
            values.push((-v * v).exp());
        }
    }
    Path::new(p.times().to_vec(), values, d).expect("valid by construction")
}

/// Pairwise (cascade) sum of equal-length rows; deterministic regardless of
/// how callers shard the surrounding work.
pub fn pairwise_sum_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].clone(),
        n => {
            let (a, b) = rows.split_at(n / 2);
            let mut left = pairwise_sum_rows(a);
            let right = pairwise_sum_rows(b);
            for (l, r) in left.iter_mut().zip(right) {
                *l += r;
            }
            left
        }
    }
}

/// Expected signature of a bundle: per path, normalize to start at 1, augment
/// time, apply the static lift, take the level-L signature, flatten, then
/// average (pairwise summation). Level 0 is excluded, so the output length is
/// sum_{k=1..L} (d+1)^k.
pub fn expected_signature(bundle: &PathBundle, level: usize) -> Result<Vec<f64>> {
    if bundle.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let rows = bundle
        .paths
        .iter()
        .map(|p| {
            let lifted = kernelize_path(&p.normalize_start(1.0)?.augment_time());
            Ok(signature_truncated(&lifted, level).flatten())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = pairwise_sum_rows(&rows);
    let n = rows.len() as f64;
    for v in &mut mean {
        *v /= n;
    }
    Ok(mean)
}

/// Truncated signature inner product: sum over levels 0..L of elementwise
/// products. Used as an independent oracle for the PDE kernel solver.
pub fn sig_inner_product(a: &TruncatedSig, b: &TruncatedSig) -> Result<f64> {
    if a.dim != b.dim || a.level != b.level {
        return Err(Error::DimMismatch(a.dim, b.dim));
    }
    let mut total = 0.0;
    for k in 0..=a.level {
        total += a.levels[k]
            .iter()
            .zip(&b.levels[k])
            .map(|(x, y)| x * y)
            .sum::<f64>();
    }
    Ok(total)
}
