//! Neural approximator of the squared 2nd-order MMD from expected signatures.
//!
//! Each training row pairs the expected truncated signatures of two simulated
//! bundles with the clamped, cosine-normalized 2nd-order MMD oracle between
//! them. A fraction of
//! rows are "zero rows": both bundles drawn independently from one model with
//! the target fixed at exactly 0, which teaches the network that sampling
//! noise maps to zero distance. The corpus stores features at the maximum
//! truncation level; lower levels are prefix slices, so one corpus serves
//! every level.

use crate::error::{Error, Result};
use crate::mmd::mmd2_unbiased_normalized;
use crate::neural::{
    mlp_forward, mlp_init, mlp_train, split_dataset, standardize_apply, standardize_fit,
    Activation, Dataset, LossHistory, MlpParams, MlpSpec, Standardizer, TrainConfig,
};
use crate::rng::{derive_seed, make_rng};
use crate::sde::{sample_params, simulate, ModelClass, ModelSpec, SimGrid};
use crate::sig::{expected_signature, flat_len};
use crate::sigkernel::{GoursatConfig, StaticKernel};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Expected signatures are computed on time-augmented 1-d paths, so the
/// signature alphabet has two letters.
const SIG_DIM: usize = 2;

/// Maximum truncation level stored in a corpus row.
pub const CORPUS_LEVEL: usize = 4;

/// Model classes the approximator is trained over.
pub const CORPUS_CLASSES: [ModelClass; 3] =
    [ModelClass::Gbm, ModelClass::MeanReverting, ModelClass::RBergomi];

/// Length of one expected-signature half at a truncation level.
pub fn half_len(level: usize) -> usize {
    flat_len(SIG_DIM, level)
}

/// Length of a full (concatenated-pair) feature vector: 12/28/60 at L=2/3/4.
pub fn feature_len(level: usize) -> usize {
    2 * half_len(level)
}

/// Hidden width used at each truncation level.
pub fn hidden_width(level: usize) -> usize {
    match level {
        2 => 25,
        3 => 60,
        _ => 90,
    }
}

/// One corpus row: concatenated expected signatures and the oracle target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmdDatasetRow {
    pub feature: Vec<f64>,
    pub target: f64,
    pub spec_a: ModelSpec,
    pub spec_b: ModelSpec,
    pub seed: u64,
}

/// Simulation and oracle settings for corpus generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Sample paths per bundle.
    pub batch: usize,
    /// Path length (number of grid nodes).
    pub len: usize,
    pub horizon: f64,
    /// Static-kernel bandwidth of the oracle.
    pub sigma: f64,
    /// Ridge level of the oracle.
    pub lambda: f64,
    pub goursat: GoursatConfig,
    /// Fraction of rows generated as zero rows.
    pub zero_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            batch: 100,
            len: 15,
            horizon: 1.0,
            sigma: 0.5,
            lambda: 1e-3,
            goursat: GoursatConfig::default(),
            zero_fraction: 0.25,
        }
    }
}

impl CorpusConfig {
    pub fn grid(&self) -> SimGrid {
        SimGrid::new(self.horizon, self.len - 1)
    }
}

fn sample_corpus_spec(rng: &mut impl Rng) -> ModelSpec {
    let class = CORPUS_CLASSES[rng.gen_range(0..CORPUS_CLASSES.len())];
    sample_params(class, rng)
}

fn build_row(cfg: &CorpusConfig, row_seed: u64, zero: bool) -> Result<MmdDatasetRow> {
    let mut rng = make_rng(row_seed);
    let grid = cfg.grid();
    let (spec_a, spec_b) = if zero {
        let s = sample_corpus_spec(&mut rng);
        (s.clone(), s)
    } else {
        (sample_corpus_spec(&mut rng), sample_corpus_spec(&mut rng))
    };
    let a = simulate(&spec_a, &grid, cfg.batch, derive_seed(row_seed, 1))?;
    let b = simulate(&spec_b, &grid, cfg.batch, derive_seed(row_seed, 2))?;
    let mut feature = expected_signature(&a, CORPUS_LEVEL)?;
    feature.extend(expected_signature(&b, CORPUS_LEVEL)?);
    let target = if zero {
        0.0
    } else {
        let k = StaticKernel::Rbf { sigma: cfg.sigma };
        // the cosine-normalized oracle keeps targets on an O(1) scale across
        // the whole sampled parameter box; the raw second-level U-statistic
        // spans dozens of orders of magnitude there
        mmd2_unbiased_normalized(&a, &b, k, &cfg.goursat, cfg.lambda)?.max(0.0)
    };
    Ok(MmdDatasetRow {
        feature,
        target,
        spec_a,
        spec_b,
        seed: row_seed,
    })
}

/// Generates the training corpus. The first `round(zero_fraction·n_rows)`
/// rows are zero rows; every row owns a derived RNG stream, so the corpus is
/// reproducible and rows parallelize freely.
pub fn build_mmd_dataset(n_rows: usize, cfg: &CorpusConfig, seed: u64) -> Result<Vec<MmdDatasetRow>> {
    if n_rows < 10 {
        return Err(Error::TooFewSamples(n_rows, 10));
    }
    let n_zero = (cfg.zero_fraction * n_rows as f64).round() as usize;
    (0..n_rows)
        .into_par_iter()
        .map(|r| build_row(cfg, derive_seed(seed, r as u64), r < n_zero))
        .collect()
}

/// Prefix slice of a concatenated-pair feature from one level down to a
/// lower one. Works because the flattened signature orders levels 1..L.
pub fn slice_feature(full: &[f64], from_level: usize, to_level: usize) -> Result<Vec<f64>> {
    let from = half_len(from_level);
    let to = half_len(to_level);
    if full.len() != 2 * from || to > from {
        return Err(Error::FeatureLength {
            got: full.len(),
            expected: 2 * from,
        });
    }
    let mut out = Vec::with_capacity(2 * to);
    out.extend_from_slice(&full[..to]);
    out.extend_from_slice(&full[from..from + to]);
    Ok(out)
}

/// Trained distance approximator: MLP + input standardizer + feature layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmdApproximator {
    pub mlp: MlpParams,
    pub standardizer: Standardizer,
    pub level: usize,
    pub symmetrize: bool,
    pub clamp: bool,
}

/// Training settings; defaults follow the regression-network protocol
/// (AdamW, 200 epochs, initial LR 5e-4, weight decay 1e-4, 80:20 split).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxTrainConfig {
    pub train: TrainConfig,
    pub symmetrize: bool,
    pub clamp: bool,
}

impl Default for ApproxTrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                epochs: 200,
                batch_size: 128,
                initial_lr: 5e-4,
                lr_final_fraction: 0.1,
                weight_decay: 1e-4,
                seed: 0,
                split_ratio: 0.8,
            },
            symmetrize: true,
            clamp: true,
        }
    }
}

/// Trains the approximator at a truncation level, slicing corpus features
/// down if the corpus was generated at a higher level.
pub fn train_approximator(
    rows: &[MmdDatasetRow],
    level: usize,
    cfg: &ApproxTrainConfig,
) -> Result<(MmdApproximator, LossHistory)> {
    let corpus_level = match rows.first() {
        Some(r) if r.feature.len() == feature_len(CORPUS_LEVEL) => CORPUS_LEVEL,
        Some(r) if r.feature.len() == feature_len(level) => level,
        Some(r) => {
            return Err(Error::FeatureLength {
                got: r.feature.len(),
                expected: feature_len(CORPUS_LEVEL),
            })
        }
        None => return Err(Error::TooFewSamples(0, 10)),
    };
    let data = Dataset {
        features: rows
            .iter()
            .map(|r| slice_feature(&r.feature, corpus_level, level))
            .collect::<Result<Vec<_>>>()?,
        targets: rows.iter().map(|r| r.target).collect(),
    };
    let (mut train, valid) = split_dataset(&data, cfg.train.split_ratio, cfg.train.seed);
    if cfg.symmetrize {
        // mirror each training pair so the network sees both argument
        // orders; applied after the split so the validation half never
        // contains a twin of a training row
        let h = half_len(level);
        let swapped: Vec<Vec<f64>> = train
            .features
            .iter()
            .map(|f| {
                let (a, b) = f.split_at(h);
                b.iter().chain(a).copied().collect()
            })
            .collect();
        train.features.extend(swapped);
        let t = train.targets.clone();
        train.targets.extend(t);
    }
    let standardizer = standardize_fit(&train.features);
    let train_std = Dataset {
        features: standardize_apply(&standardizer, &train.features),
        targets: train.targets,
    };
    let valid_std = Dataset {
        features: standardize_apply(&standardizer, &valid.features),
        targets: valid.targets,
    };
    let spec = MlpSpec {
        input_dim: feature_len(level),
        hidden_dim: hidden_width(level),
        activation: Activation::Relu,
    };
    let init = mlp_init(spec, derive_seed(cfg.train.seed, 0xA9));
    let (mlp, history) = mlp_train(init, &train_std, &valid_std, &cfg.train)?;
    Ok((
        MmdApproximator {
            mlp,
            standardizer,
            level,
            symmetrize: cfg.symmetrize,
            clamp: cfg.clamp,
        },
        history,
    ))
}

fn forward_pair(m: &MmdApproximator, a: &[f64], b: &[f64]) -> Result<f64> {
    let mut x = Vec::with_capacity(a.len() + b.len());
    x.extend_from_slice(a);
    x.extend_from_slice(b);
    let std = standardize_apply(&m.standardizer, &[x]);
    mlp_forward(&m.mlp, &std[0])
}

/// Predicted squared distance between two expected-signature halves. With
/// `symmetrize` both input orders are averaged; with `clamp` the output is
/// floored at 0.
pub fn approx_distance(m: &MmdApproximator, a: &[f64], b: &[f64]) -> Result<f64> {
    let want = half_len(m.level);
    for v in [a, b] {
        if v.len() != want {
            return Err(Error::FeatureLength {
                got: v.len(),
                expected: want,
            });
        }
    }
    let mut out = forward_pair(m, a, b)?;
    if m.symmetrize {
        out = 0.5 * (out + forward_pair(m, b, a)?);
    }
    if m.clamp {
        out = out.max(0.0);
    }
    Ok(out)
}

/// Expected-signature half for a bundle at the approximator's level.
pub fn bundle_feature(m: &MmdApproximator, bundle: &crate::path::PathBundle) -> Result<Vec<f64>> {
    expected_signature(bundle, m.level)
}

/// Self-distance diagnostic: samples specs, simulates two independent
/// bundles per spec, and reports the fraction with approx(X,X') < 0.1.
pub fn metric_diagnostics(
    m: &MmdApproximator,
    n_tests: usize,
    cfg: &CorpusConfig,
    seed: u64,
) -> Result<f64> {
    let grid = cfg.grid();
    let passes = (0..n_tests)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(seed, t as u64);
            let spec = sample_corpus_spec(&mut make_rng(trial_seed));
            let a = simulate(&spec, &grid, cfg.batch, derive_seed(trial_seed, 1))?;
            let b = simulate(&spec, &grid, cfg.batch, derive_seed(trial_seed, 2))?;
            let fa = expected_signature(&a, m.level)?;
            let fb = expected_signature(&b, m.level)?;
            Ok(usize::from(approx_distance(m, &fa, &fb)? < 0.1))
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(passes.iter().sum::<usize>() as f64 / n_tests as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> CorpusConfig {
        CorpusConfig {
            batch: 10,
            len: 8,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn feature_lengths_match_expected_table() {
        assert_eq!(feature_len(2), 12);
        assert_eq!(feature_len(3), 28);
        assert_eq!(feature_len(4), 60);
    }

    #[test]
    fn corpus_structure_and_determinism() {
        let cfg = tiny_cfg();
        let rows = build_mmd_dataset(12, &cfg, 42).unwrap();
        assert_eq!(rows.len(), 12);
        let n_zero = rows.iter().filter(|r| r.target == 0.0 && r.spec_a == r.spec_b).count();
        assert_eq!(n_zero, 3, "zero_fraction 0.25 of 12 rows");
        for r in &rows {
            assert_eq!(r.feature.len(), feature_len(CORPUS_LEVEL));
            assert!(r.target >= 0.0);
            assert!(r.feature.iter().all(|v| v.is_finite()));
        }
        // zero rows: identical specs, distinct feature halves
        let z = &rows[0];
        assert_eq!(z.spec_a, z.spec_b);
        let h = half_len(CORPUS_LEVEL);
        assert_ne!(&z.feature[..h], &z.feature[h..]);
        let again = build_mmd_dataset(12, &cfg, 42).unwrap();
        for (x, y) in rows.iter().zip(&again) {
            assert_eq!(x.feature, y.feature);
            assert_eq!(x.target, y.target);
        }
    }

    #[test]
    fn corpus_rejects_tiny_row_counts() {
        assert!(matches!(
            build_mmd_dataset(5, &tiny_cfg(), 1),
            Err(Error::TooFewSamples(5, 10))
        ));
    }

    #[test]
    fn slice_feature_is_a_prefix_per_half() {
        let full: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let l3 = slice_feature(&full, 4, 3).unwrap();
        assert_eq!(l3.len(), 28);
        assert_eq!(&l3[..14], &full[..14]);
        assert_eq!(&l3[14..], &full[30..44]);
        let l2 = slice_feature(&l3, 3, 2).unwrap();
        assert_eq!(slice_feature(&full, 4, 2).unwrap(), l2);
        assert!(slice_feature(&full, 3, 2).is_err());
        assert!(slice_feature(&full, 4, 5).is_err());
    }

    fn untrained(level: usize) -> MmdApproximator {
        let spec = MlpSpec {
            input_dim: feature_len(level),
            hidden_dim: hidden_width(level),
            activation: Activation::Relu,
        };
        MmdApproximator {
            mlp: mlp_init(spec, 7),
            standardizer: Standardizer {
                mean: vec![0.0; feature_len(level)],
                std: vec![1.0; feature_len(level)],
            },
            level,
            symmetrize: true,
            clamp: true,
        }
    }

    #[test]
    fn approx_distance_is_symmetric_nonnegative_and_checks_lengths() {
        let m = untrained(2);
        let a: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let b: Vec<f64> = (0..6).map(|i| -0.2 * i as f64).collect();
        let ab = approx_distance(&m, &a, &b).unwrap();
        let ba = approx_distance(&m, &b, &a).unwrap();
        assert_eq!(ab, ba);
        assert!(ab >= 0.0);
        assert!(matches!(
            approx_distance(&m, &a[..5], &b),
            Err(Error::FeatureLength { got: 5, expected: 6 })
        ));
    }

    #[test]
    fn training_consumes_corpus_and_reports_history() {
        let cfg = tiny_cfg();
        let rows = build_mmd_dataset(20, &cfg, 3).unwrap();
        let tc = ApproxTrainConfig {
            train: TrainConfig {
                epochs: 5,
                ..ApproxTrainConfig::default().train
            },
            ..ApproxTrainConfig::default()
        };
        let (m, hist) = train_approximator(&rows, 2, &tc).unwrap();
        assert_eq!(m.level, 2);
        assert_eq!(hist.train.len(), 5);
        assert!(hist.train.iter().all(|v| v.is_finite()));
        // serving works end to end on a fresh bundle pair
        let grid = cfg.grid();
        let spec = sample_corpus_spec(&mut make_rng(9));
        let a = simulate(&spec, &grid, cfg.batch, 100).unwrap();
        let b = simulate(&spec, &grid, cfg.batch, 101).unwrap();
        let fa = bundle_feature(&m, &a).unwrap();
        let fb = bundle_feature(&m, &b).unwrap();
        let d = approx_distance(&m, &fa, &fb).unwrap();
        assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn metric_diagnostics_is_deterministic() {
        let cfg = tiny_cfg();
        let rows = build_mmd_dataset(20, &cfg, 5).unwrap();
        let tc = ApproxTrainConfig {
            train: TrainConfig {
                epochs: 3,
                ..ApproxTrainConfig::default().train
            },
            ..ApproxTrainConfig::default()
        };
        let (m, _) = train_approximator(&rows, 2, &tc).unwrap();
        let f1 = metric_diagnostics(&m, 10, &cfg, 77).unwrap();
        let f2 = metric_diagnostics(&m, 10, &cfg, 77).unwrap();
        assert_eq!(f1, f2);
        assert!((0.0..=1.0).contains(&f1));
    }
}
