//! Reference-set distribution regression (the SPEEDRS pipeline).
//!
//! An input process is featurized by its distances to a fixed collection of
//! reference processes ("landmarks"): per marginal, the approximated squared
//! 2nd-order MMD between the input's expected signature and each cached
//! reference signature. A small MLP regresses those feature vectors against
//! scalar targets. Pointwise-kernel baselines (RBF / Matern32 on flattened
//! value rows) are provided for comparison; unlike the signature features
//! they require a uniform path length.

use crate::approx::{approx_distance, MmdApproximator};
use crate::error::{Error, Result};
use crate::neural::{
    mlp_forward, mlp_init, mlp_train, split_dataset, standardize_apply, standardize_fit,
    Activation, Dataset, LossHistory, MlpParams, MlpSpec, Standardizer, TrainConfig,
};
use crate::path::PathBundle;
use crate::rng::{derive_seed, make_rng};
use crate::sde::{sample_params, simulate, ModelClass, ModelSpec, SimGrid};
use crate::sig::expected_signature;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Reference-set class mix: rBergomi : mean-reverting : GBM = 2 : 2 : 1,
/// rounded by largest remainder (deterministic tie-break in that order).
pub fn ratio_split(count: usize) -> [usize; 3] {
    let weights = [2.0, 2.0, 1.0];
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w * count as f64 / total).collect();
    let mut out = [0usize; 3];
    let mut assigned = 0;
    for (o, e) in out.iter_mut().zip(&exact) {
        *o = e.floor() as usize;
        assigned += *o;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..count - assigned {
        out[order[k % 3]] += 1;
    }
    out
}

const REF_CLASSES: [ModelClass; 3] =
    [ModelClass::RBergomi, ModelClass::MeanReverting, ModelClass::Gbm];

/// Simulation settings for reference-set caches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefSetConfig {
    /// Sample paths behind the cached expected signature.
    pub batch_sig: usize,
    /// Sample paths behind the cached baseline sample matrix.
    pub batch_baseline: usize,
    /// Path length (grid nodes).
    pub len: usize,
    pub horizon: f64,
}

impl Default for RefSetConfig {
    fn default() -> Self {
        Self {
            batch_sig: 400,
            batch_baseline: 400,
            len: 15,
            horizon: 1.0,
        }
    }
}

impl RefSetConfig {
    pub fn grid(&self) -> SimGrid {
        SimGrid::new(self.horizon, self.len - 1)
    }
}

/// One landmark process with its precomputed caches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub id: usize,
    /// Which marginal of the input this reference is compared against.
    pub marginal: usize,
    pub spec: ModelSpec,
    pub seed: u64,
    /// Expected signature of the reference bundle at the approximator level.
    pub exp_sig: Vec<f64>,
    /// Flattened value rows (one per sample path) for the baselines.
    pub sample: Vec<Vec<f64>>,
}

fn build_one_ref(
    id: usize,
    marginal: usize,
    class: ModelClass,
    cfg: &RefSetConfig,
    level: usize,
    seed: u64,
) -> Result<ReferenceSet> {
    let ref_seed = derive_seed(seed, id as u64);
    let spec = sample_params(class, &mut make_rng(ref_seed));
    let grid = cfg.grid();
    let sig_bundle = simulate(&spec, &grid, cfg.batch_sig, derive_seed(ref_seed, 1))?;
    let exp_sig = expected_signature(&sig_bundle, level)?;
    let base_bundle = simulate(&spec, &grid, cfg.batch_baseline, derive_seed(ref_seed, 2))?;
    let sample = base_bundle
        .paths
        .iter()
        .map(|p| p.values().to_vec())
        .collect();
    Ok(ReferenceSet {
        id,
        marginal,
        spec,
        seed: ref_seed,
        exp_sig,
        sample,
    })
}

/// Builds `b_total` reference sets split evenly across `d` marginals, each
/// marginal's share following the 2:2:1 class ratio. Ordered by
/// (marginal, id), which is also the feature-coordinate order.
pub fn build_reference_sets(
    b_total: usize,
    d: usize,
    cfg: &RefSetConfig,
    level: usize,
    seed: u64,
) -> Result<Vec<ReferenceSet>> {
    if d == 0 || b_total % d != 0 || b_total / d == 0 {
        return Err(Error::IndivisibleCount(b_total, d));
    }
    let per = b_total / d;
    let counts = ratio_split(per);
    let mut plan = Vec::with_capacity(b_total);
    let mut id = 0;
    for marginal in 0..d {
        for (c, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                plan.push((id, marginal, REF_CLASSES[c]));
                id += 1;
            }
        }
    }
    plan.par_iter()
        .map(|&(id, marginal, class)| build_one_ref(id, marginal, class, cfg, level, seed))
        .collect()
}

/// SPEEDRS feature vector: for each marginal j and each reference for that
/// marginal, the approximated squared distance between the input marginal's
/// expected signature and the cached reference signature.
pub fn features_speedrs(
    bundle: &PathBundle,
    refs: &[ReferenceSet],
    m: &MmdApproximator,
) -> Result<Vec<f64>> {
    let d = bundle.dim();
    let covered = refs.iter().map(|r| r.marginal + 1).max().unwrap_or(0);
    if covered != d {
        return Err(Error::DimMismatch(covered, d));
    }
    let marg_sigs: Vec<Vec<f64>> = (0..d)
        .map(|j| expected_signature(&bundle.marginal(j)?, m.level))
        .collect::<Result<Vec<_>>>()?;
    refs.iter()
        .map(|r| approx_distance(m, &marg_sigs[r.marginal], &r.exp_sig))
        .collect()
}

/// Pointwise kernels for the baseline featurizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaselineKernel {
    Rbf { sigma: f64 },
    Matern32 { sigma: f64 },
}

impl BaselineKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match *self {
            BaselineKernel::Rbf { sigma } => (-sq / (2.0 * sigma * sigma)).exp(),
            BaselineKernel::Matern32 { sigma } => {
                let s3s = 3.0_f64.sqrt() * sigma * sigma;
                (1.0 + s3s * sq.sqrt()) * (-s3s * sq).exp()
            }
        }
    }
}

/// Coefficient convention of the baseline distance feature. `AsPrinted`
/// uses 1/N on both self-interaction sums and 2/(N·M) on the cross sum;
/// `StandardBiased` is the usual biased MMD² with 1/N² and 1/M².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMmdForm {
    AsPrinted,
    StandardBiased,
}

fn flatten_rows(bundle: &PathBundle) -> Result<Vec<Vec<f64>>> {
    let l = bundle.paths[0].len();
    let d = bundle.dim();
    let mut rows = Vec::with_capacity(bundle.len() * d);
    for p in &bundle.paths {
        if p.len() != l {
            return Err(Error::LengthMismatch);
        }
        for j in 0..d {
            rows.push((0..l).map(|i| p.value(i, j)).collect());
        }
    }
    Ok(rows)
}

fn kernel_sum(a: &[Vec<f64>], b: &[Vec<f64>], k: BaselineKernel) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += k.eval(x, y);
        }
    }
    s
}

/// Baseline feature vector: one distance per reference set, computed on the
/// flattened value rows. Requires a uniform path length across the bundle
/// and every reference cache.
pub fn features_pointwise(
    bundle: &PathBundle,
    refs: &[ReferenceSet],
    kernel: BaselineKernel,
    form: BaselineMmdForm,
) -> Result<Vec<f64>> {
    let rows = flatten_rows(bundle)?;
    let l = rows[0].len();
    let n = rows.len() as f64;
    let s_xx = kernel_sum(&rows, &rows, kernel);
    refs.par_iter()
        .map(|r| {
            if r.sample.iter().any(|z| z.len() != l) {
                return Err(Error::LengthMismatch);
            }
            let m = r.sample.len() as f64;
            let s_xz = kernel_sum(&rows, &r.sample, kernel);
            let s_zz = kernel_sum(&r.sample, &r.sample, kernel);
            Ok(match form {
                BaselineMmdForm::AsPrinted => {
                    s_xx / n - 2.0 * s_xz / (n * m) + s_zz / m
                }
                BaselineMmdForm::StandardBiased => {
                    s_xx / (n * n) - 2.0 * s_xz / (n * m) + s_zz / (m * m)
                }
            })
        })
        .collect()
}

/// Feature rows plus provenance for one regression task.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub meta: Vec<RowMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowMeta {
    pub spec: ModelSpec,
    pub seed: u64,
}

/// Downstream regressor: standardizer + MLP over reference-distance features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionModel {
    pub mlp: MlpParams,
    pub standardizer: Standardizer,
}

/// Standardize, split 80:20, and fit the MLP; returns the model with its
/// per-epoch train/validation MSE history.
pub fn train_regressor(
    table: &FeatureTable,
    width: usize,
    activation: Activation,
    cfg: &TrainConfig,
) -> Result<(RegressionModel, LossHistory)> {
    if table.rows.is_empty() {
        return Err(Error::TooFewSamples(0, 2));
    }
    let data = Dataset {
        features: table.rows.clone(),
        targets: table.targets.clone(),
    };
    let (train, valid) = split_dataset(&data, cfg.split_ratio, cfg.seed);
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
        input_dim: table.rows[0].len(),
        hidden_dim: width,
        activation,
    };
    let init = mlp_init(spec, derive_seed(cfg.seed, 0x5D));
    let (mlp, history) = mlp_train(init, &train_std, &valid_std, cfg)?;
    Ok((RegressionModel { mlp, standardizer }, history))
}

/// Forward pass on a raw (unstandardized) feature vector.
pub fn predict(model: &RegressionModel, features: &[f64]) -> Result<f64> {
    let std = standardize_apply(&model.standardizer, &[features.to_vec()]);
    mlp_forward(&model.mlp, &std[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{
        build_mmd_dataset, train_approximator, ApproxTrainConfig, CorpusConfig,
    };
    use rand::seq::SliceRandom;

    fn tiny_refs(b: usize, d: usize, level: usize) -> Vec<ReferenceSet> {
        let cfg = RefSetConfig {
            batch_sig: 20,
            batch_baseline: 10,
            len: 10,
            horizon: 1.0,
        };
        build_reference_sets(b, d, &cfg, level, 5).unwrap()
    }

    #[test]
    fn ratio_split_matches_largest_remainder() {
        assert_eq!(ratio_split(20), [8, 8, 4]);
        assert_eq!(ratio_split(10), [4, 4, 2]);
        assert_eq!(ratio_split(5), [2, 2, 1]);
        // count 4: remainders 0.6/0.6/0.8 hand one to gbm, then rbergomi
        assert_eq!(ratio_split(4), [2, 1, 1]);
        let total: usize = ratio_split(7).iter().sum();
        assert_eq!(total, 7);
    }

    #[test]
    fn reference_sets_have_documented_structure() {
        let refs = tiny_refs(10, 1, 2);
        assert_eq!(refs.len(), 10);
        let rb = refs.iter().filter(|r| r.spec.label() == "rbergomi").count();
        let mr = refs
            .iter()
            .filter(|r| r.spec.label() == "mean_reverting")
            .count();
        let g = refs.iter().filter(|r| r.spec.label() == "gbm").count();
        assert_eq!((rb, mr, g), (4, 4, 2));
        // rebuild from the same seed reproduces every cache exactly
        let again = tiny_refs(10, 1, 2);
        for (a, b) in refs.iter().zip(&again) {
            assert_eq!(a.exp_sig, b.exp_sig);
            assert_eq!(a.sample, b.sample);
            assert_eq!(a.spec, b.spec);
        }
        // multi-marginal split
        let refs3 = tiny_refs(30, 3, 2);
        for j in 0..3 {
            assert_eq!(refs3.iter().filter(|r| r.marginal == j).count(), 10);
        }
        assert!(matches!(
            build_reference_sets(10, 3, &RefSetConfig::default(), 2, 1),
            Err(Error::IndivisibleCount(10, 3))
        ));
    }

    fn quick_approximator(level: usize) -> MmdApproximator {
        let cfg = CorpusConfig {
            batch: 20,
            len: 10,
            ..CorpusConfig::default()
        };
        let rows = build_mmd_dataset(60, &cfg, 17).unwrap();
        let tc = ApproxTrainConfig {
            train: TrainConfig {
                epochs: 40,
                ..ApproxTrainConfig::default().train
            },
            ..ApproxTrainConfig::default()
        };
        train_approximator(&rows, level, &tc).unwrap().0
    }

    #[test]
    fn speedrs_features_length_and_permutation_invariance() {
        let m = quick_approximator(2);
        let refs = tiny_refs(5, 1, 2);
        let grid = SimGrid::new(1.0, 9);
        let spec = ModelSpec::Gbm {
            mu: 0.05,
            sigma: 0.3,
            x0: 1.0,
        };
        let bundle = simulate(&spec, &grid, 20, 99).unwrap();
        let f = features_speedrs(&bundle, &refs, &m).unwrap();
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|v| v.is_finite() && *v >= 0.0));
        let mut perm = bundle.clone();
        perm.paths.shuffle(&mut make_rng(3));
        let g = features_speedrs(&perm, &refs, &m).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        // dimension mismatch is rejected
        let gas = ModelSpec::IdealGas {
            temperature: 2.0,
            n_particles: 5,
            volume: 5.0,
        };
        let gas_bundle = simulate(&gas, &grid, 5, 1).unwrap();
        assert!(matches!(
            features_speedrs(&gas_bundle, &refs, &m),
            Err(Error::DimMismatch(1, 3))
        ));
    }

    #[test]
    fn pointwise_features_match_closed_forms() {
        assert_eq!(
            BaselineKernel::Matern32 { sigma: 1.0 }.eval(&[1.0, 2.0], &[1.0, 2.0]),
            1.0
        );
        let rbf = BaselineKernel::Rbf { sigma: 1.0 };
        assert!((rbf.eval(&[0.0], &[2.0]) - (-2.0_f64).exp()).abs() < 1e-15);

        let refs = tiny_refs(4, 1, 2);
        let grid = SimGrid::new(1.0, 9);
        let spec = ModelSpec::Gbm {
            mu: 0.05,
            sigma: 0.3,
            x0: 1.0,
        };
        let bundle = simulate(&spec, &grid, 10, 7).unwrap();
        let printed =
            features_pointwise(&bundle, &refs, rbf, BaselineMmdForm::AsPrinted).unwrap();
        let standard =
            features_pointwise(&bundle, &refs, rbf, BaselineMmdForm::StandardBiased).unwrap();
        assert_eq!(printed.len(), 4);
        // the printed coefficients are N times the standard ones on the self
        // terms, so the two conventions must disagree on generic data
        assert!(printed.iter().zip(&standard).any(|(a, b)| (a - b).abs() > 1e-9));
        for v in &standard {
            // standard biased MMD² is a squared RKHS norm up to rounding
            assert!(*v >= -1e-12);
        }

        // bundle identical to the ref's own sample, as printed:
        // value = (1/N)S_xx - 2/(N*N) S_xz + (1/N)S_zz with all three sums
        // equal, i.e. 2*S/N - 2*S/N^2 for S the full kernel sum
        let zpaths: Vec<crate::path::Path> = refs[0]
            .sample
            .iter()
            .map(|v| {
                crate::path::Path::scalar(
                    (0..v.len()).map(|i| i as f64).collect(),
                    v.clone(),
                )
                .unwrap()
            })
            .collect();
        let zbundle = PathBundle::new(zpaths, "ref0", 0).unwrap();
        let same = features_pointwise(&zbundle, &refs[..1], rbf, BaselineMmdForm::AsPrinted)
            .unwrap()[0];
        let n = refs[0].sample.len() as f64;
        let s = kernel_sum(&refs[0].sample, &refs[0].sample, rbf);
        let want = 2.0 * s / n - 2.0 * s / (n * n);
        assert!((same - want).abs() <= 1e-12 * want.abs());

        // mixed lengths are rejected
        let short = simulate(&spec, &SimGrid::new(1.0, 5), 10, 8).unwrap();
        assert!(matches!(
            features_pointwise(&short, &refs, rbf, BaselineMmdForm::AsPrinted),
            Err(Error::LengthMismatch)
        ));
    }

    #[test]
    fn regressor_trains_and_predicts_deterministically() {
        let mut rng = make_rng(13);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..5).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>()).collect();
        let meta = rows
            .iter()
            .map(|_| RowMeta {
                spec: ModelSpec::Gbm {
                    mu: 0.1,
                    sigma: 0.2,
                    x0: 1.0,
                },
                seed: 0,
            })
            .collect();
        let table = FeatureTable {
            rows,
            targets,
            meta,
        };
        let cfg = TrainConfig {
            epochs: 50,
            seed: 2,
            ..TrainConfig::default()
        };
        let (m1, h1) = train_regressor(&table, 15, Activation::Relu, &cfg).unwrap();
        let (m2, h2) = train_regressor(&table, 15, Activation::Relu, &cfg).unwrap();
        assert_eq!(h1.train, h2.train);
        let x = vec![0.3; 5];
        assert_eq!(predict(&m1, &x).unwrap(), predict(&m2, &x).unwrap());
        assert!(h1.valid.last().unwrap().is_finite());
    }

}
