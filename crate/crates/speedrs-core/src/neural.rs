//! Minimal feedforward network with exact backpropagation and AdamW.
//!
//! Three hidden layers of equal width, scalar linear output. Training is
//! single-threaded and fully determined by the config seed; the learning
//! rate decays exponentially per epoch so the final epoch runs at one tenth
//! of the initial rate.

use crate::error::{Error, Result};
use crate::rng::make_rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanhshrink,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanhshrink => v - v.tanh(),
        }
    }

    fn derivative(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanhshrink => {
                let s = 1.0 / v.cosh();
                1.0 - s * s
            }
        }
    }
}

/// Architecture: input -> h -> h -> h -> 1 with linear output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    /// Layer shapes as (out, in) pairs.
    fn shapes(&self) -> [(usize, usize); 4] {
        let h = self.hidden_dim;
        [(h, self.input_dim), (h, h), (h, h), (1, h)]
    }
}

/// Dense layer, weights row-major (out x in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// He-style init: weights N(0, 2/fan_in), biases 0, deterministic per seed.
pub fn mlp_init(spec: MlpSpec, seed: u64) -> MlpParams {
    let mut rng = make_rng(seed);
    let layers = spec
        .shapes()
        .iter()
        .map(|&(rows, cols)| {
            let scale = (2.0 / cols as f64).sqrt();
            let w = (0..rows * cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            Layer {
                w,
                b: vec![0.0; rows],
                rows,
                cols,
            }
        })
        .collect();
    MlpParams { spec, layers }
}

fn affine(layer: &Layer, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for r in 0..layer.rows {
        let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
        let mut acc = layer.b[r];
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        out.push(acc);
    }
}

/// Forward pass to the scalar output.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.spec.input_dim {
        return Err(Error::DimMismatch(x.len(), params.spec.input_dim));
    }
    let act = params.spec.activation;
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    for (li, layer) in params.layers.iter().enumerate() {
        affine(layer, &cur, &mut next);
        if li + 1 < params.layers.len() {
            for v in &mut next {
                *v = act.apply(*v);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur[0])
}

/// Per-layer gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    fn zeros(params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| Layer {
                w: vec![0.0; l.w.len()],
                b: vec![0.0; l.b.len()],
                rows: l.rows,
                cols: l.cols,
            })
            .collect();
        Self { layers }
    }
}

/// Mean-squared-error loss and its exact gradient over a batch.
pub fn mse_loss_and_grad(
    params: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> Result<(f64, MlpGrads)> {
    let act = params.spec.activation;
    let n_layers = params.layers.len();
    let mut grads = MlpGrads::zeros(params);
    let mut loss = 0.0;
    let inv = 1.0 / xs.len() as f64;

    for (x, &y) in xs.iter().zip(ys) {
        if x.len() != params.spec.input_dim {
            return Err(Error::DimMismatch(x.len(), params.spec.input_dim));
        }
        // forward, caching pre-activations and layer inputs
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut cur = x.clone();
        for (li, layer) in params.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let mut z = Vec::new();
            affine(layer, &cur, &mut z);
            pre.push(z.clone());
            if li + 1 < n_layers {
                for v in &mut z {
                    *v = act.apply(*v);
                }
            }
            cur = z;
        }
        let err = cur[0] - y;
        loss += err * err * inv;

        // backward
        let mut delta = vec![2.0 * err * inv];
        for li in (0..n_layers).rev() {
            let layer = &params.layers[li];
            let g = &mut grads.layers[li];
            for r in 0..layer.rows {
                g.b[r] += delta[r];
                let inp = &inputs[li];
                let grow = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                for (gw, v) in grow.iter_mut().zip(inp) {
                    *gw += delta[r] * v;
                }
            }
            if li > 0 {
                let mut prev_delta = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += delta[r] * w;
                    }
                }
                for (pd, z) in prev_delta.iter_mut().zip(&pre[li - 1]) {
                    *pd *= act.derivative(*z);
                }
                delta = prev_delta;
            }
        }
    }
    Ok((loss, grads))
}

/// Plain MSE of the model over a dataset.
pub fn mse(params: &MlpParams, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let e = mlp_forward(params, x)? - y;
        loss += e * e;
    }
    Ok(loss / xs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Final-epoch LR as a fraction of the initial (exponential schedule).
    pub lr_final_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub split_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            initial_lr: 5e-4,
            lr_final_fraction: 0.1,
            weight_decay: 1e-4,
            seed: 0,
            split_ratio: 0.8,
        }
    }
}

/// Feature rows with scalar targets.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Disjoint, exhaustive, seeded split into (train, valid).
pub fn split_dataset(data: &Dataset, ratio: f64, seed: u64) -> (Dataset, Dataset) {
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut make_rng(seed));
    let cut = ((ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let pick = |ids: &[usize]| Dataset {
        features: ids.iter().map(|&i| data.features[i].clone()).collect(),
        targets: ids.iter().map(|&i| data.targets[i]).collect(),
    };
    (pick(&idx[..cut]), pick(&idx[cut..]))
}

/// Per-feature mean/std standardizer fit on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

pub fn standardize_fit(xs: &[Vec<f64>]) -> Standardizer {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut mean = vec![0.0; d];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; d];
    for x in xs {
        for j in 0..d {
            let c = x[j] - mean[j];
            std[j] += c * c / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt().max(STD_FLOOR);
    }
    Standardizer { mean, std }
}

pub fn standardize_apply(s: &Standardizer, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|x| {
            x.iter()
                .zip(s.mean.iter().zip(&s.std))
                .map(|(v, (m, sd))| (v - m) / sd)
                .collect()
        })
        .collect()
}

/// Per-epoch training and validation MSE.
#[derive(Debug, Clone, Default)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub valid: Vec<f64>,
}

struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Minimizes MSE with AdamW (decoupled weight decay on weights, not biases)
/// over seeded mini-batches. Aborts with `NonFiniteLoss` if the loss leaves
/// the reals.
pub fn mlp_train(
    mut params: MlpParams,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpParams, LossHistory)> {
    assert!(!train.is_empty(), "empty training set");
    let zeros = MlpGrads::zeros(&params).layers;
    let mut adam = AdamState {
        m: zeros.clone(),
        v: zeros,
        step: 0,
    };
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = make_rng(cfg.seed);
    let decay = if cfg.epochs > 1 {
        cfg.lr_final_fraction.powf(1.0 / (cfg.epochs - 1) as f64)
    } else {
        1.0
    };
    let mut lr = cfg.initial_lr;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train.features[i].clone()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| train.targets[i]).collect();
            let (loss, grads) = mse_loss_and_grad(&params, &xs, &ys)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, loss });
            }
            adam.step += 1;
            let bc1 = 1.0 - BETA1.powi(adam.step as i32);
            let bc2 = 1.0 - BETA2.powi(adam.step as i32);
            for (li, layer) in params.layers.iter_mut().enumerate() {
                let g = &grads.layers[li];
                let m = &mut adam.m[li];
                let v = &mut adam.v[li];
                for i in 0..layer.w.len() {
                    m.w[i] = BETA1 * m.w[i] + (1.0 - BETA1) * g.w[i];
                    v.w[i] = BETA2 * v.w[i] + (1.0 - BETA2) * g.w[i] * g.w[i];
                    let mhat = m.w[i] / bc1;
                    let vhat = v.w[i] / bc2;
                    layer.w[i] -=
                        lr * (mhat / (vhat.sqrt() + EPS) + cfg.weight_decay * layer.w[i]);
                }
                for i in 0..layer.b.len() {
                    m.b[i] = BETA1 * m.b[i] + (1.0 - BETA1) * g.b[i];
                    v.b[i] = BETA2 * v.b[i] + (1.0 - BETA2) * g.b[i] * g.b[i];
                    let mhat = m.b[i] / bc1;
                    let vhat = v.b[i] / bc2;
                    layer.b[i] -= lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
        history
            .train
            .push(mse(&params, &train.features, &train.targets)?);
        let v = if valid.is_empty() {
            f64::NAN
        } else {
            mse(&params, &valid.features, &valid.targets)?
        };
        history.valid.push(v);
        lr *= decay;
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec() -> MlpSpec {
        MlpSpec {
            input_dim: 3,
            hidden_dim: 8,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = mlp_init(spec(), 1);
        let b = mlp_init(spec(), 1);
        assert_eq!(a, b);
        for l in &a.layers {
            assert!(l.b.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn init_variance_near_two_over_fan_in() {
        let s = MlpSpec {
            input_dim: 64,
            hidden_dim: 64,
            activation: Activation::Relu,
        };
        let p = mlp_init(s, 3);
        let mut all = Vec::new();
        for l in &p.layers[..3] {
            all.extend_from_slice(&l.w);
        }
        assert!(all.len() >= 10_000);
        let var = all.iter().map(|w| w * w).sum::<f64>() / all.len() as f64;
        let want = 2.0 / 64.0;
        assert!((var - want).abs() <= 0.2 * want, "var {var} vs {want}");
    }

    #[test]
    fn forward_closed_forms() {
        let mut p = mlp_init(spec(), 0);
        for l in &mut p.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
        }
        p.layers[3].b[0] = 1.5;
        assert_eq!(mlp_forward(&p, &[0.2, 0.3, -0.1]).unwrap(), 1.5);
        assert!(mlp_forward(&p, &[0.0; 4]).is_err());
        // tanhshrink at 0 is 0
        assert_eq!(Activation::Tanhshrink.apply(0.0), 0.0);
    }

    #[test]
    fn nonnegative_relu_net_is_monotone() {
        let mut p = mlp_init(spec(), 5);
        for l in &mut p.layers {
            for w in &mut l.w {
                *w = w.abs();
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..20 {
            let x = [i as f64 * 0.1, 0.5, 0.5];
            let y = mlp_forward(&p, &x).unwrap();
            assert!(y >= prev - 1e-12);
            prev = y;
        }
    }

    fn gradient_check(activation: Activation) -> f64 {
        let s = MlpSpec {
            input_dim: 4,
            hidden_dim: 6,
            activation,
        };
        let mut p = mlp_init(s, 9);
        // random biases so ReLU kinks sit away from the sample points
        let mut rng = make_rng(77);
        for l in &mut p.layers {
            for b in &mut l.b {
                *b = 0.1 * rng.gen::<f64>() + 0.05;
            }
        }
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        let ys: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
        let (_, grads) = mse_loss_and_grad(&p, &xs, &ys).unwrap();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for li in 0..p.layers.len() {
            for wi in 0..p.layers[li].w.len() {
                let orig = p.layers[li].w[wi];
                p.layers[li].w[wi] = orig + h;
                let up = mse(&p, &xs, &ys).unwrap();
                p.layers[li].w[wi] = orig - h;
                let dn = mse(&p, &xs, &ys).unwrap();
                p.layers[li].w[wi] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads.layers[li].w[wi];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                worst = worst.max(rel);
            }
            for bi in 0..p.layers[li].b.len() {
                let orig = p.layers[li].b[bi];
                p.layers[li].b[bi] = orig + h;
                let up = mse(&p, &xs, &ys).unwrap();
                p.layers[li].b[bi] = orig - h;
                let dn = mse(&p, &xs, &ys).unwrap();
                p.layers[li].b[bi] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads.layers[li].b[bi];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences() {
        assert!(gradient_check(Activation::Relu) <= 1e-4);
        assert!(gradient_check(Activation::Tanhshrink) <= 1e-4);
    }

    #[test]
    fn memorizes_small_dataset() {
        let mut rng = make_rng(21);
        let xs: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1] + 0.3 * x[2]).collect();
        let train = Dataset {
            features: xs,
            targets: ys,
        };
        let cfg = TrainConfig {
            epochs: 2000,
            batch_size: 32,
            initial_lr: 5e-3,
            weight_decay: 0.0,
            seed: 4,
            ..TrainConfig::default()
        };
        let s = MlpSpec {
            input_dim: 3,
            hidden_dim: 24,
            activation: Activation::Relu,
        };
        let (_, hist) = mlp_train(mlp_init(s, 4), &train, &Dataset::default(), &cfg).unwrap();
        let last = *hist.train.last().unwrap();
        assert!(last <= 1e-4, "train MSE {last}");
    }

    #[test]
    fn huge_weight_decay_shrinks_weights() {
        let mut rng = make_rng(31);
        let xs: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ys = vec![0.0; 16];
        let train = Dataset {
            features: xs,
            targets: ys,
        };
        let cfg = TrainConfig {
            epochs: 50,
            weight_decay: 1e3,
            initial_lr: 1e-3,
            seed: 1,
            ..TrainConfig::default()
        };
        let init = mlp_init(spec(), 2);
        let norm = |p: &MlpParams| -> f64 {
            p.layers
                .iter()
                .flat_map(|l| l.w.iter())
                .map(|w| w * w)
                .sum::<f64>()
                .sqrt()
        };
        let before = norm(&init);
        let (after, _) = mlp_train(init, &train, &Dataset::default(), &cfg).unwrap();
        assert!(norm(&after) < before);
    }

    #[test]
    fn training_is_reproducible() {
        let mut rng = make_rng(41);
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ys: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
        let data = Dataset {
            features: xs,
            targets: ys,
        };
        let cfg = TrainConfig {
            epochs: 10,
            seed: 6,
            ..TrainConfig::default()
        };
        let run = || {
            mlp_train(mlp_init(spec(), 8), &data, &Dataset::default(), &cfg)
                .unwrap()
                .1
                .train
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adamw_zero_grad_zero_decay_is_identity() {
        // zero gradient means m and v stay 0 and the update vanishes
        let p = mlp_init(spec(), 1);
        let xs = vec![vec![0.0; 3]];
        // make output bias match target exactly -> zero error -> zero grad
        let mut q = p.clone();
        for l in &mut q.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
        }
        let ys = vec![0.0];
        let train = Dataset {
            features: xs,
            targets: ys,
        };
        let cfg = TrainConfig {
            epochs: 3,
            weight_decay: 0.0,
            seed: 0,
            ..TrainConfig::default()
        };
        let (after, _) = mlp_train(q.clone(), &train, &Dataset::default(), &cfg).unwrap();
        assert_eq!(after, q);
    }

    #[test]
    fn standardizer_contract() {
        let xs = vec![
            vec![1.0, 5.0, 2.0],
            vec![3.0, 5.0, 4.0],
            vec![5.0, 5.0, 9.0],
        ];
        let s = standardize_fit(&xs);
        let t = standardize_apply(&s, &xs);
        // constant column maps to zeros (floored std)
        for row in &t {
            assert_eq!(row[1], 0.0);
        }
        for j in [0usize, 2] {
            let mean: f64 = t.iter().map(|r| r[j]).sum::<f64>() / 3.0;
            assert!(mean.abs() <= 1e-10);
        }
        // held-out rows use fit statistics
        let held = standardize_apply(&s, &[vec![1.0, 5.0, 2.0]]);
        assert_eq!(held[0], t[0]);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let data = Dataset {
            features: (0..100).map(|i| vec![i as f64]).collect(),
            targets: (0..100).map(|i| i as f64).collect(),
        };
        let (tr, va) = split_dataset(&data, 0.8, 5);
        assert_eq!(tr.len(), 80);
        assert_eq!(va.len(), 20);
        let mut all: Vec<f64> = tr.targets.iter().chain(&va.targets).cloned().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());
        let (tr2, _) = split_dataset(&data, 0.8, 5);
        assert_eq!(tr.targets, tr2.targets);
    }
}
