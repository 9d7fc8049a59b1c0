//! Stochastic model specifications and data generators.
//!
//! Every simulator derives one RNG stream per path from (bundle seed, path
//! index), so results are bit-identical no matter how the path loop is
//! sharded. Euler-Maruyama updates follow the discretizations the bundled
//! experiments expect; the rough Bergomi generator uses moment-matched
//! convolution weights and antithetic variates.

mod gas;

pub use gas::simulate_ideal_gas;

use crate::error::{Error, Result};
use crate::path::{Path, PathBundle};
use crate::rng::{derive_seed, make_rng};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Tagged stochastic-model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbm {
        mu: f64,
        sigma: f64,
        x0: f64,
    },
    Cev {
        mu: f64,
        sigma: f64,
        gamma: f64,
        x0: f64,
    },
    MeanReverting {
        mu: f64,
        kappa: f64,
        theta: f64,
        xi: f64,
        rho: f64,
        v0: f64,
        x0: f64,
    },
    RBergomi {
        xi0: f64,
        nu: f64,
        hurst: f64,
        rho: f64,
        x0: f64,
    },
    Mixture {
        alpha: f64,
        left: Box<ModelSpec>,
        right: Box<ModelSpec>,
    },
    IdealGas {
        temperature: f64,
        n_particles: usize,
        volume: f64,
    },
}

impl ModelSpec {
    /// Short identifier used as bundle metadata.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Gbm { .. } => "gbm".into(),
            ModelSpec::Cev { .. } => "cev".into(),
            ModelSpec::MeanReverting { .. } => "mean_reverting".into(),
            ModelSpec::RBergomi { .. } => "rbergomi".into(),
            ModelSpec::Mixture { left, right, .. } => {
                format!("mixture({},{})", left.label(), right.label())
            }
            ModelSpec::IdealGas { .. } => "ideal_gas".into(),
        }
    }
}

/// Uniform simulation grid over [0, T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl SimGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Self {
        assert!(horizon > 0.0 && n_steps >= 1);
        Self { horizon, n_steps }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .map(|i| i as f64 * self.dt())
            .collect()
    }
}

/// Model class tags for parameter sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    Gbm,
    Cev,
    MeanReverting,
    RBergomi,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws a spec with each parameter uniform in its documented range
/// (mu in [0.01,0.2), sigma/v0/theta/kappa/xi in [0.2,0.8), rho in [-1,1),
/// xi0 in [0.01,0.2), nu in [0.5,4.0), H in [0.025,0.5)); x0 is fixed at 1.
pub fn sample_params(class: ModelClass, rng: &mut impl Rng) -> ModelSpec {
    match class {
        ModelClass::Gbm => ModelSpec::Gbm {
            mu: uniform(rng, 0.01, 0.2),
            sigma: uniform(rng, 0.2, 0.8),
            x0: 1.0,
        },
        ModelClass::Cev => ModelSpec::Cev {
            mu: uniform(rng, 0.01, 0.2),
            sigma: uniform(rng, 0.2, 0.8),
            gamma: uniform(rng, 0.5, 1.0),
            x0: 1.0,
        },
        ModelClass::MeanReverting => ModelSpec::MeanReverting {
            mu: uniform(rng, 0.01, 0.2),
            kappa: uniform(rng, 0.2, 0.8),
            theta: uniform(rng, 0.2, 0.8),
            xi: uniform(rng, 0.2, 0.8),
            rho: uniform(rng, -1.0, 1.0),
            v0: uniform(rng, 0.2, 0.8),
            x0: 1.0,
        },
        ModelClass::RBergomi => ModelSpec::RBergomi {
            xi0: uniform(rng, 0.01, 0.2),
            nu: uniform(rng, 0.5, 4.0),
            hurst: uniform(rng, 0.025, 0.5),
            rho: uniform(rng, -1.0, 1.0),
            x0: 1.0,
        },
    }
}

fn bundle_from_rows(
    rows: Vec<Vec<f64>>,
    grid: &SimGrid,
    label: String,
    seed: u64,
) -> PathBundle {
    let times = grid.times();
    let paths = rows
        .into_iter()
        .map(|v| Path::scalar(times.clone(), v).expect("simulator output is valid"))
        .collect();
    PathBundle::new(paths, label, seed).expect("nonempty")
}

/// Geometric Brownian motion by Euler-Maruyama.
pub fn simulate_gbm(spec: &ModelSpec, grid: &SimGrid, n_paths: usize, seed: u64) -> PathBundle {
    let (mu, sigma, x0) = match *spec {
        ModelSpec::Gbm { mu, sigma, x0 } => (mu, sigma, x0),
        _ => panic!("simulate_gbm requires a GBM spec"),
    };
    let dt = grid.dt();
    let sq = dt.sqrt();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .map(|p| {
            let mut rng = make_rng(derive_seed(seed, p as u64));
            let mut s = x0;
            let mut row = Vec::with_capacity(grid.n_steps + 1);
            row.push(s);
            for _ in 0..grid.n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                s += mu * s * dt + sigma * sq * s * z;
                row.push(s);
            }
            row
        })
        .collect();
    bundle_from_rows(rows, grid, spec.label(), seed)
}

/// Constant-elasticity-of-variance model; gamma = 1 reduces to GBM
/// path-for-path under a shared seed.
pub fn simulate_cev(spec: &ModelSpec, grid: &SimGrid, n_paths: usize, seed: u64) -> PathBundle {
    let (mu, sigma, gamma, x0) = match *spec {
        ModelSpec::Cev {
            mu,
            sigma,
            gamma,
            x0,
        } => (mu, sigma, gamma, x0),
        _ => panic!("simulate_cev requires a CEV spec"),
    };
    let dt = grid.dt();
    let sq = dt.sqrt();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .map(|p| {
            let mut rng = make_rng(derive_seed(seed, p as u64));
            let mut s = x0;
            let mut row = Vec::with_capacity(grid.n_steps + 1);
            row.push(s);
            for _ in 0..grid.n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                s += mu * s * dt + sigma * sq * s.abs().powf(gamma) * z;
                row.push(s);
            }
            row
        })
        .collect();
    bundle_from_rows(rows, grid, spec.label(), seed)
}

/// Mean-reverting stochastic-volatility model. Price is updated before the
/// variance; the variance noise is rho*Z_S + sqrt(1-rho^2)*Z_v and negative
/// variances are floored at zero inside the square roots. Only the price
/// path is emitted.
pub fn simulate_mean_reverting(
    spec: &ModelSpec,
    grid: &SimGrid,
    n_paths: usize,
    seed: u64,
) -> PathBundle {
    let (mu, kappa, theta, xi, rho, v0, x0) = match *spec {
        ModelSpec::MeanReverting {
            mu,
            kappa,
            theta,
            xi,
            rho,
            v0,
            x0,
        } => (mu, kappa, theta, xi, rho, v0, x0),
        _ => panic!("simulate_mean_reverting requires a MeanReverting spec"),
    };
    let dt = grid.dt();
    let sq = dt.sqrt();
    let rho_c = (1.0 - rho * rho).sqrt();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .map(|p| {
            let mut rng = make_rng(derive_seed(seed, p as u64));
            let mut s = x0;
            let mut v = v0;
            let mut row = Vec::with_capacity(grid.n_steps + 1);
            row.push(s);
            for _ in 0..grid.n_steps {
                let zs: f64 = StandardNormal.sample(&mut rng);
                let zv: f64 = StandardNormal.sample(&mut rng);
                let vol = v.max(0.0).sqrt();
                s += mu * s * dt + vol * sq * s * zs;
                v += kappa * (theta - v) * dt + xi * sq * vol * (rho * zs + rho_c * zv);
                row.push(s);
            }
            row
        })
        .collect();
    bundle_from_rows(rows, grid, spec.label(), seed)
}

/// Moment-matched convolution weights g(t_i*) for the fractional kernel
/// u^(H-1/2) on a uniform grid with step dt.
pub fn rbergomi_weights(hurst: f64, dt: f64, n_steps: usize) -> Vec<f64> {
    (1..=n_steps)
        .map(|j| {
            let a = (j as f64 * dt).powf(2.0 * hurst);
            let b = ((j - 1) as f64 * dt).powf(2.0 * hurst);
            let t_star = ((a - b) / (2.0 * hurst * dt)).powf(1.0 / (2.0 * hurst - 1.0));
            t_star.powf(hurst - 0.5)
        })
        .collect()
}

fn rbergomi_pair(
    spec_params: (f64, f64, f64, f64, f64),
    grid: &SimGrid,
    weights: &[f64],
    pair_seed: u64,
) -> ([Vec<f64>; 2], Vec<f64>) {
    let (xi0, nu, hurst, rho, x0) = spec_params;
    let n = grid.n_steps;
    let dt = grid.dt();
    let sq = dt.sqrt();
    let rho_c = (1.0 - rho * rho).sqrt();
    let mut rng = make_rng(pair_seed);
    let zeta: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let xi_draw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    // phi(t_i) = sqrt(dt) * (g * zeta)_i; antithetic partner negates zeta
    let mut paths: [Vec<f64>; 2] = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
    for (half, path) in paths.iter_mut().enumerate() {
        let sign = if half == 0 { 1.0 } else { -1.0 };
        let mut x = x0.ln();
        path.push(x0);
        let mut phi_prev = 0.0;
        for i in 1..=n {
            // variance at the left node t_{i-1}
            let t_prev = (i - 1) as f64 * dt;
            let v_prev = xi0
                * (2.0 * nu * (2.0 * hurst).sqrt() * phi_prev
                    - 2.0 * nu * nu * t_prev.powf(2.0 * hurst))
                .exp();
            let zs = rho * xi_draw[i - 1] + sign * rho_c * zeta[i - 1];
            x += -0.5 * v_prev * dt + v_prev.sqrt() * sq * zs;
            path.push(x.exp());
            // convolution for the next step
            let mut acc = 0.0;
            for k in 0..i {
                acc += weights[i - 1 - k] * sign * zeta[k];
            }
            phi_prev = sq * acc;
        }
    }
    (paths, zeta)
}

/// Rough Bergomi price paths via the convolution scheme with antithetic
/// variates; `n_paths` must be even. Paths come in consecutive pairs whose
/// volatility-driving normals negate exactly.
pub fn simulate_rbergomi(
    spec: &ModelSpec,
    grid: &SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let params = match *spec {
        ModelSpec::RBergomi {
            xi0,
            nu,
            hurst,
            rho,
            x0,
        } => (xi0, nu, hurst, rho, x0),
        _ => panic!("simulate_rbergomi requires an RBergomi spec"),
    };
    if n_paths % 2 != 0 {
        return Err(Error::OddPathCount(n_paths));
    }
    let weights = rbergomi_weights(params.2, grid.dt(), grid.n_steps);
    let mut rows = Vec::with_capacity(n_paths);
    for p in 0..n_paths / 2 {
        let ([a, b], _) = rbergomi_pair(params, grid, &weights, derive_seed(seed, p as u64));
        rows.push(a);
        rows.push(b);
    }
    Ok(bundle_from_rows(rows, grid, spec.label(), seed))
}

/// Pathwise convex combination alpha*A + (1-alpha)*B of two bundles sharing
/// a grid and shape.
pub fn mixture_paths(alpha: f64, a: &PathBundle, b: &PathBundle) -> Result<PathBundle> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::ShapeMismatch);
    }
    let mut paths = Vec::with_capacity(a.len());
    for (pa, pb) in a.paths.iter().zip(&b.paths) {
        if pa.len() != pb.len() || pa.times() != pb.times() {
            return Err(Error::ShapeMismatch);
        }
        let values: Vec<f64> = pa
            .values()
            .iter()
            .zip(pb.values())
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
            .collect();
        paths.push(Path::new(pa.times().to_vec(), values, pa.dim())?);
    }
    PathBundle::new(
        paths,
        format!("mixture({},{},{alpha})", a.spec_id, b.spec_id),
        a.seed,
    )
}

/// Simulates a bundle for any spec. Mixtures simulate both legs with derived
/// seeds and combine pathwise.
pub fn simulate(spec: &ModelSpec, grid: &SimGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    match spec {
        ModelSpec::Gbm { .. } => Ok(simulate_gbm(spec, grid, n_paths, seed)),
        ModelSpec::Cev { .. } => Ok(simulate_cev(spec, grid, n_paths, seed)),
        ModelSpec::MeanReverting { .. } => Ok(simulate_mean_reverting(spec, grid, n_paths, seed)),
        ModelSpec::RBergomi { .. } => simulate_rbergomi(spec, grid, n_paths, seed),
        ModelSpec::Mixture { alpha, left, right } => {
            let a = simulate(left, grid, n_paths, derive_seed(seed, 1))?;
            let b = simulate(right, grid, n_paths, derive_seed(seed, 2))?;
            mixture_paths(*alpha, &a, &b)
        }
        ModelSpec::IdealGas { .. } => simulate_ideal_gas(spec, grid, n_paths, seed),
    }
}

/// Monte Carlo price of a down-and-in barrier call: mean over paths of
/// max(x_T - strike, 0) * 1{running minimum <= barrier}. The running minimum
/// is taken over the discrete grid including x0; no discounting.
pub fn price_barrier_mc(bundle: &PathBundle, strike: f64, barrier: f64) -> Result<f64> {
    if bundle.dim() != 1 {
        return Err(Error::DimMismatch(bundle.dim(), 1));
    }
    let total: f64 = bundle
        .paths
        .iter()
        .map(|p| {
            let min = p.values().iter().cloned().fold(f64::INFINITY, f64::min);
            let terminal = *p.values().last().unwrap();
            if min <= barrier {
                (terminal - strike).max(0.0)
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / bundle.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SimGrid {
        SimGrid::new(1.0, 15)
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn sample_params_ranges_and_determinism() {
        let mut rng = make_rng(0);
        let mut mus = Vec::new();
        for _ in 0..10_000 {
            match sample_params(ModelClass::RBergomi, &mut rng) {
                ModelSpec::RBergomi {
                    xi0,
                    nu,
                    hurst,
                    rho,
                    ..
                } => {
                    assert!((0.01..0.2).contains(&xi0));
                    assert!((0.5..4.0).contains(&nu));
                    assert!((0.025..0.5).contains(&hurst));
                    assert!((-1.0..1.0).contains(&rho));
                }
                _ => unreachable!(),
            }
            if let ModelSpec::Gbm { mu, .. } = sample_params(ModelClass::Gbm, &mut rng) {
                mus.push(mu);
            }
        }
        // mean within 3 SE of the range midpoint
        let (mean, se) = mean_se(&mus);
        assert!((mean - 0.105).abs() <= 3.0 * se, "mean {mean}, se {se}");
        // fixed seed -> identical spec
        let a = sample_params(ModelClass::MeanReverting, &mut make_rng(5));
        let b = sample_params(ModelClass::MeanReverting, &mut make_rng(5));
        assert_eq!(a, b);
    }

    #[test]
    fn gbm_zero_vol_is_deterministic() {
        let spec = ModelSpec::Gbm {
            mu: 0.1,
            sigma: 0.0,
            x0: 2.0,
        };
        let b = simulate_gbm(&spec, &grid(), 3, 1);
        let dt = grid().dt();
        for p in &b.paths {
            for (i, v) in p.values().iter().enumerate() {
                let want = 2.0 * (1.0 + 0.1 * dt).powi(i as i32);
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gbm_terminal_mean_matches_closed_form() {
        let spec = ModelSpec::Gbm {
            mu: 0.1,
            sigma: 0.4,
            x0: 1.0,
        };
        let g = SimGrid::new(1.0, 50);
        let b = simulate_gbm(&spec, &g, 20_000, 7);
        let terminals: Vec<f64> = b.paths.iter().map(|p| *p.values().last().unwrap()).collect();
        let (mean, se) = mean_se(&terminals);
        // Euler drift bias at 50 steps is ~mu^2/(2*50), well inside 3 SE here
        let want = (0.1_f64).exp();
        assert!((mean - want).abs() <= 3.0 * se, "mean {mean} vs {want}");
    }

    #[test]
    fn reproducible_under_fixed_seed() {
        let spec = ModelSpec::Gbm {
            mu: 0.1,
            sigma: 0.4,
            x0: 1.0,
        };
        let a = simulate_gbm(&spec, &grid(), 10, 3);
        let b = simulate_gbm(&spec, &grid(), 10, 3);
        for (x, y) in a.paths.iter().zip(&b.paths) {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn cev_gamma_one_reduces_to_gbm() {
        let cev = ModelSpec::Cev {
            mu: 0.1,
            sigma: 0.4,
            gamma: 1.0,
            x0: 1.5,
        };
        let gbm = ModelSpec::Gbm {
            mu: 0.1,
            sigma: 0.4,
            x0: 1.5,
        };
        let a = simulate_cev(&cev, &grid(), 20, 11);
        let b = simulate_gbm(&gbm, &grid(), 20, 11);
        for (x, y) in a.paths.iter().zip(&b.paths) {
            for (u, v) in x.values().iter().zip(y.values()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_reverting_constant_variance_matches_gbm_moment() {
        let spec = ModelSpec::MeanReverting {
            mu: 0.1,
            kappa: 0.5,
            theta: 0.36,
            xi: 0.0,
            rho: -0.5,
            v0: 0.36,
            x0: 1.0,
        };
        let g = SimGrid::new(1.0, 50);
        let b = simulate_mean_reverting(&spec, &g, 20_000, 13);
        let terminals: Vec<f64> = b.paths.iter().map(|p| *p.values().last().unwrap()).collect();
        let (mean, se) = mean_se(&terminals);
        let want = (0.1_f64).exp();
        assert!((mean - want).abs() <= 3.0 * se, "mean {mean} vs {want}");
    }

    #[test]
    fn rbergomi_nu_zero_log_variance() {
        let spec = ModelSpec::RBergomi {
            xi0: 0.1,
            nu: 1e-12,
            hurst: 0.25,
            rho: -0.5,
            x0: 1.0,
        };
        let g = SimGrid::new(1.0, 15);
        let b = simulate_rbergomi(&spec, &g, 10_000, 17).unwrap();
        let logs: Vec<f64> = b
            .paths
            .iter()
            .map(|p| p.values().last().unwrap().ln())
            .collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        // variance of the sample variance ~ 2 var^2 / n
        let se = (2.0 * var * var / n).sqrt();
        assert!((var - 0.1).abs() <= 3.0 * se, "var {var}");
    }

    #[test]
    fn rbergomi_antithetic_zeta_cancels() {
        let weights = rbergomi_weights(0.25, 1.0 / 15.0, 15);
        let ([a, b], zeta) = rbergomi_pair((0.1, 2.0, 0.25, 0.0, 1.0), &grid(), &weights, 42);
        assert_eq!(zeta.len(), 15);
        // with rho = 0 the two paths are driven by +zeta and -zeta: their
        // log-returns mirror around the shared drift
        let ra: Vec<f64> = (1..=1).map(|i| (a[i] / a[i - 1]).ln()).collect();
        let rb: Vec<f64> = (1..=1).map(|i| (b[i] / b[i - 1]).ln()).collect();
        let drift = -0.5 * 0.1 / 15.0;
        assert!((ra[0] - drift + (rb[0] - drift)).abs() < 1e-12);
        // odd path count rejected
        let spec = ModelSpec::RBergomi {
            xi0: 0.1,
            nu: 1.0,
            hurst: 0.25,
            rho: 0.0,
            x0: 1.0,
        };
        assert!(matches!(
            simulate_rbergomi(&spec, &grid(), 3, 0),
            Err(Error::OddPathCount(3))
        ));
    }

    #[test]
    fn rbergomi_weight_closed_form() {
        let h: f64 = 0.25;
        let n = 15;
        let dt = 1.0 / n as f64;
        let w = rbergomi_weights(h, dt, n);
        for j in 1..=n {
            let a = (j as f64 * dt).powf(2.0 * h);
            let b = ((j - 1) as f64 * dt).powf(2.0 * h);
            let t_star = ((n as f64 / (2.0 * h)) * (a - b)).powf(1.0 / (2.0 * h - 1.0));
            assert!((w[j - 1] - t_star.powf(h - 0.5)).abs() < 1e-12 * w[j - 1].abs());
        }
    }

    #[test]
    fn mixture_endpoints_and_midpoint() {
        let spec = ModelSpec::Gbm {
            mu: 0.1,
            sigma: 0.3,
            x0: 1.0,
        };
        let a = simulate_gbm(&spec, &grid(), 5, 1);
        let b = simulate_gbm(&spec, &grid(), 5, 2);
        let m1 = mixture_paths(1.0, &a, &b).unwrap();
        let m0 = mixture_paths(0.0, &a, &b).unwrap();
        for i in 0..5 {
            assert_eq!(m1.paths[i].values(), a.paths[i].values());
            assert_eq!(m0.paths[i].values(), b.paths[i].values());
        }
        let mh = mixture_paths(0.5, &a, &b).unwrap();
        for i in 0..5 {
            for (j, v) in mh.paths[i].values().iter().enumerate() {
                let want = 0.5 * (a.paths[i].values()[j] + b.paths[i].values()[j]);
                assert!((v - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn barrier_pricer_limits() {
        let spec = ModelSpec::Gbm {
            mu: 0.1,
            sigma: 0.4,
            x0: 90.0,
        };
        let b = simulate_gbm(&spec, &grid(), 500, 23);
        // barrier above the start: always knocked in, equals vanilla MC
        let hit = price_barrier_mc(&b, 80.0, 95.0).unwrap();
        let vanilla: f64 = b
            .paths
            .iter()
            .map(|p| (p.values().last().unwrap() - 80.0).max(0.0))
            .sum::<f64>()
            / 500.0;
        assert!((hit - vanilla).abs() < 1e-12);
        // barrier below every minimum: price 0
        assert_eq!(price_barrier_mc(&b, 80.0, 0.0).unwrap(), 0.0);
    }
}
