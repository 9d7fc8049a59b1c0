//! Hard-sphere ideal gas in a cubic box.
//!
//! Fixed-step integration with post-step collision resolution: walls reflect
//! specularly, overlapping approaching pairs exchange their normal velocity
//! components (equal masses, mass = 1, kB = 1). Both operations preserve
//! kinetic energy exactly, which the tests pin. The substep is chosen from
//! the total kinetic energy so no particle can cross a radius in one substep.
//!
//! Reported coordinates place the box at [1, 1 + side] on every axis rather
//! than [0, side]: the dynamics are translation-invariant, and keeping every
//! coordinate strictly positive and O(1)-offset lets gas paths flow through
//! the same start-normalizing signature featurization as the price paths.

use crate::error::{Error, Result};
use crate::path::{Path, PathBundle};
use crate::rng::{derive_seed, make_rng};
use crate::sde::{ModelSpec, SimGrid};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const INIT_ATTEMPTS_PER_PARTICLE: usize = 10_000;

/// Reported coordinates are shifted so the box spans [WALL_OFFSET,
/// WALL_OFFSET + side]; see the module docs.
const WALL_OFFSET: f64 = 1.0;

struct GasState {
    pos: Vec<[f64; 3]>,
    vel: Vec<[f64; 3]>,
    radius: f64,
    side: f64,
}

impl GasState {
    fn init(temperature: f64, n: usize, volume: f64, seed: u64) -> Result<Self> {
        let side = volume.cbrt();
        let radius = 0.35 * (volume / n as f64).cbrt();
        let lo = radius;
        let hi = side - radius;
        assert!(hi > lo, "box too small for the particle radius");

        let mut pos_rng = make_rng(derive_seed(seed, 0));
        let mut pos: Vec<[f64; 3]> = Vec::with_capacity(n);
        let min_sq = 4.0 * radius * radius;
        for i in 0..n {
            let mut placed = false;
            for _ in 0..INIT_ATTEMPTS_PER_PARTICLE {
                let cand = [
                    lo + (hi - lo) * pos_rng.gen::<f64>(),
                    lo + (hi - lo) * pos_rng.gen::<f64>(),
                    lo + (hi - lo) * pos_rng.gen::<f64>(),
                ];
                if pos.iter().all(|p| dist_sq(p, &cand) >= min_sq) {
                    pos.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::PackingTooDense(i + 1));
            }
        }

        // Maxwell-Boltzmann at temperature T: velocity components are
        // independent normals with variance T (mass 1, kB 1)
        let mut vel_rng = make_rng(derive_seed(seed, 1));
        let sd = temperature.sqrt();
        let mut draw = || -> f64 {
            let z: f64 = StandardNormal.sample(&mut vel_rng);
            sd * z
        };
        let vel = (0..n).map(|_| [draw(), draw(), draw()]).collect();

        Ok(Self {
            pos,
            vel,
            radius,
            side,
        })
    }

    fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .vel
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
            .sum::<f64>()
    }

    fn step(&mut self, dt: f64) {
        let lo = self.radius;
        let hi = self.side - self.radius;
        for (p, v) in self.pos.iter_mut().zip(self.vel.iter_mut()) {
            for a in 0..3 {
                p[a] += v[a] * dt;
                if p[a] < lo {
                    p[a] = 2.0 * lo - p[a];
                    v[a] = -v[a];
                } else if p[a] > hi {
                    p[a] = 2.0 * hi - p[a];
                    v[a] = -v[a];
                }
            }
        }
        // resolve overlapping, approaching pairs elastically
        let min_sq = 4.0 * self.radius * self.radius;
        let n = self.pos.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist_sq(&self.pos[i], &self.pos[j]);
                if d >= min_sq || d == 0.0 {
                    continue;
                }
                let mut normal = [0.0; 3];
                for a in 0..3 {
                    normal[a] = self.pos[j][a] - self.pos[i][a];
                }
                let norm = d.sqrt();
                for x in &mut normal {
                    *x /= norm;
                }
                let rel: f64 = (0..3)
                    .map(|a| (self.vel[i][a] - self.vel[j][a]) * normal[a])
                    .sum();
                if rel <= 0.0 {
                    continue; // separating already
                }
                for a in 0..3 {
                    self.vel[i][a] -= rel * normal[a];
                    self.vel[j][a] += rel * normal[a];
                }
            }
        }
    }
}

fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// Simulates one box of `n` particles and returns one 3-d path per particle,
/// in the shifted frame [WALL_OFFSET, WALL_OFFSET + side].
fn simulate_one_box(
    temperature: f64,
    n: usize,
    volume: f64,
    grid: &SimGrid,
    seed: u64,
) -> Result<Vec<Path>> {
    let mut state = GasState::init(temperature, n, volume, seed)?;

    // substep small enough that no particle moves more than half a radius
    let v_cap = (2.0 * state.kinetic_energy()).sqrt().max(1e-12);
    let dt_out = grid.dt();
    let substeps = ((dt_out * v_cap) / (0.5 * state.radius)).ceil().max(1.0) as usize;
    let dt = dt_out / substeps as f64;

    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity((grid.n_steps + 1) * 3); n];
    let record = |samples: &mut Vec<Vec<f64>>, state: &GasState| {
        for (i, s) in samples.iter_mut().enumerate() {
            s.extend(state.pos[i].iter().map(|&c| c + WALL_OFFSET));
        }
    };
    record(&mut samples, &state);
    for _ in 0..grid.n_steps {
        for _ in 0..substeps {
            state.step(dt);
        }
        record(&mut samples, &state);
    }

    let times = grid.times();
    Ok(samples
        .into_iter()
        .map(|v| Path::new(times.clone(), v, 3).expect("valid gas path"))
        .collect())
}

/// Simulates hard spheres in cubic boxes of `n_particles` each, running as
/// many independent replica boxes (with derived seeds) as needed to collect
/// `n_paths` particle trajectories. Replicas keep the per-box collision cost
/// bounded while letting bundle sizes exceed the box occupancy; each replica
/// is an independent draw from the same gas, so concatenating trajectories
/// samples the same particle law.
pub fn simulate_ideal_gas(
    spec: &ModelSpec,
    grid: &SimGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let (temperature, n, volume) = match *spec {
        ModelSpec::IdealGas {
            temperature,
            n_particles,
            volume,
        } => (temperature, n_particles, volume),
        _ => panic!("simulate_ideal_gas requires an IdealGas spec"),
    };
    let replicas = n_paths.div_ceil(n).max(1);
    let mut paths = Vec::with_capacity(replicas * n);
    for r in 0..replicas {
        paths.extend(simulate_one_box(
            temperature,
            n,
            volume,
            grid,
            derive_seed(seed, r as u64),
        )?);
    }
    paths.truncate(n_paths);
    PathBundle::new(paths, spec.label(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas_spec(t: f64, n: usize) -> ModelSpec {
        ModelSpec::IdealGas {
            temperature: t,
            n_particles: n,
            volume: n as f64,
        }
    }

    #[test]
    fn energy_is_conserved() {
        let spec = gas_spec(4.0, 40);
        let grid = SimGrid::new(1.0, 20);
        let mut state = match spec {
            ModelSpec::IdealGas {
                temperature,
                n_particles,
                volume,
            } => GasState::init(temperature, n_particles, volume, 3).unwrap(),
            _ => unreachable!(),
        };
        let e0 = state.kinetic_energy();
        for _ in 0..400 {
            state.step(grid.dt() / 20.0);
        }
        let e1 = state.kinetic_energy();
        assert!((e1 - e0).abs() <= 1e-9 * e0, "energy drift {e0} -> {e1}");
    }

    #[test]
    fn positions_stay_in_the_box() {
        let spec = gas_spec(9.0, 30);
        let grid = SimGrid::new(1.0, 20);
        let b = simulate_ideal_gas(&spec, &grid, 30, 7).unwrap();
        let side = 30.0_f64.cbrt();
        for p in &b.paths {
            for v in p.values() {
                assert!(*v >= WALL_OFFSET && *v <= WALL_OFFSET + side);
            }
        }
    }

    #[test]
    fn initial_speed_scales_with_temperature() {
        // mean squared speed at t=0 is 3T; ratio for T=4 vs T=1 near 4
        let msq = |t: f64, seed: u64| -> f64 {
            let spec = gas_spec(t, 400);
            let grid = SimGrid::new(0.01, 1);
            let b = simulate_ideal_gas(&spec, &grid, 400, seed).unwrap();
            let mut acc = 0.0;
            for (i, p) in b.paths.iter().enumerate() {
                let _ = i;
                // reconstruct speed from the first displacement is noisy;
                // use the first two samples over the tiny step instead
                let dt = 0.01;
                let mut s = 0.0;
                for j in 0..3 {
                    let d = (p.value(1, j) - p.value(0, j)) / dt;
                    s += d * d;
                }
                acc += s;
            }
            acc / b.len() as f64
        };
        let ratios: Vec<f64> = (0..10).map(|s| msq(4.0, s) / msq(1.0, s)).collect();
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 4.0).abs() <= 3.0 * se.max(0.05), "ratio {mean}");
    }

    #[test]
    fn replica_boxes_extend_the_bundle() {
        let spec = gas_spec(3.0, 20);
        let grid = SimGrid::new(1.0, 5);
        let small = simulate_ideal_gas(&spec, &grid, 20, 9).unwrap();
        let big = simulate_ideal_gas(&spec, &grid, 50, 9).unwrap();
        assert_eq!(small.len(), 20);
        assert_eq!(big.len(), 50);
        // the first box is shared, later replicas are fresh draws
        for (a, b) in small.paths.iter().zip(&big.paths) {
            assert_eq!(a.values(), b.values());
        }
        assert_ne!(big.paths[0].values(), big.paths[20].values());
    }

    #[test]
    fn reproducible_per_seed() {
        let spec = gas_spec(2.0, 20);
        let grid = SimGrid::new(1.0, 5);
        let a = simulate_ideal_gas(&spec, &grid, 20, 11).unwrap();
        let b = simulate_ideal_gas(&spec, &grid, 20, 11).unwrap();
        for (x, y) in a.paths.iter().zip(&b.paths) {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn initialization_is_overlap_free() {
        let state = GasState::init(1.0, 60, 60.0, 5).unwrap();
        let min_sq = 4.0 * state.radius * state.radius;
        for i in 0..60 {
            for j in (i + 1)..60 {
                assert!(dist_sq(&state.pos[i], &state.pos[j]) >= min_sq);
            }
        }
    }
}
