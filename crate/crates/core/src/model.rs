//! Driving noise: a Lévy model with finite atomic jump measure, the time
//! grid, and seeded forward path ensembles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{CounterRng, StreamTag};

/// One atom of the jump measure: a nonzero mark in `R^d` hit with the given
/// rate (jumps per unit time).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub mark: Vec<f64>,
    pub intensity: f64,
}

impl JumpAtom {
    pub fn mark_norm(&self) -> f64 {
        self.mark.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Drift, diffusion and a finite list of jump atoms.
///
/// Every atom is compensated in the forward dynamics; the contribution of the
/// large marks (`|x| > 1`), which the Lévy-Itô form leaves uncompensated, is
/// absorbed into the adjusted drift so that a single jump representation
/// serves both the forward and the backward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    /// State dimension d.
    pub dim: usize,
    /// Brownian dimension k (zero for pure drift/jump models).
    pub brownian_dim: usize,
    /// Drift vector of length d (Lévy-Itô convention).
    pub drift: Vec<f64>,
    /// Diffusion matrix, d x k row-major.
    pub diffusion: Vec<f64>,
    pub atoms: Vec<JumpAtom>,
}

impl LevyModel {
    pub fn new(
        dim: usize,
        brownian_dim: usize,
        drift: Vec<f64>,
        diffusion: Vec<f64>,
        atoms: Vec<JumpAtom>,
    ) -> Result<Self> {
        let model = LevyModel {
            dim,
            brownian_dim,
            drift,
            diffusion,
            atoms,
        };
        model.validate()?;
        Ok(model)
    }

    /// Pure Brownian motion in one dimension (zero drift, unit diffusion).
    pub fn standard_brownian() -> Self {
        LevyModel {
            dim: 1,
            brownian_dim: 1,
            drift: vec![0.0],
            diffusion: vec![1.0],
            atoms: Vec::new(),
        }
    }

    /// Deterministic model: no diffusion, no jumps.
    pub fn deterministic(dim: usize, drift: Vec<f64>) -> Self {
        LevyModel {
            dim,
            brownian_dim: 0,
            drift,
            diffusion: Vec::new(),
            atoms: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidModel("state dimension must be >= 1".into()));
        }
        if self.drift.len() != self.dim {
            return Err(Error::InvalidModel(format!(
                "drift length {} != dim {}",
                self.drift.len(),
                self.dim
            )));
        }
        if self.diffusion.len() != self.dim * self.brownian_dim {
            return Err(Error::InvalidModel(format!(
                "diffusion has {} entries, expected {}x{}",
                self.diffusion.len(),
                self.dim,
                self.brownian_dim
            )));
        }
        for (j, atom) in self.atoms.iter().enumerate() {
            if atom.mark.len() != self.dim {
                return Err(Error::InvalidModel(format!(
                    "atom {j}: mark length {} != dim {}",
                    atom.mark.len(),
                    self.dim
                )));
            }
            if !(atom.intensity > 0.0) || !atom.intensity.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "atom {j}: intensity must be strictly positive and finite"
                )));
            }
            if atom.mark_norm() == 0.0 {
                return Err(Error::InvalidModel(format!("atom {j}: mark must be nonzero")));
            }
        }
        Ok(())
    }

    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity).sum()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.intensity).collect()
    }

    /// Drift after absorbing the compensators of the large marks:
    /// `a' = a + Σ_{|x_j| > 1} λ_j x_j`.
    pub fn adjusted_drift(&self) -> Vec<f64> {
        let mut out = self.drift.clone();
        for atom in &self.atoms {
            if atom.mark_norm() > 1.0 {
                for (o, x) in out.iter_mut().zip(&atom.mark) {
                    *o += atom.intensity * x;
                }
            }
        }
        out
    }
}

/// Keep exactly the atoms with `|x_j| >= 1/level`; drift, diffusion and
/// dimensions are unchanged. Idempotent for a fixed level.
pub fn truncate_levy(model: &LevyModel, level: u32) -> LevyModel {
    assert!(level >= 1, "truncation level must be >= 1");
    let threshold = 1.0 / f64::from(level);
    let mut out = model.clone();
    out.atoms.retain(|a| a.mark_norm() >= threshold);
    out
}

/// Discretization of `[0, T]`; uniform by default, custom nodes supported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Self {
        assert!(horizon > 0.0 && steps >= 1);
        let dt = horizon / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        nodes[steps] = horizon;
        TimeGrid { nodes }
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Validation(
                "grid needs at least two nodes starting at 0".into(),
            ));
        }
        if !nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Validation("grid nodes must be strictly increasing".into()));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }
}

/// Seeded Monte Carlo forward paths: Brownian increments, per-atom Poisson
/// counts, and the forward state. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub brownian_dim: usize,
    pub atom_count: usize,
    pub seed: u64,
    /// Brownian increments, `paths x steps x brownian_dim`.
    pub dw: Vec<f64>,
    /// Poisson jump counts per atom, `paths x steps x atom_count`.
    pub counts: Vec<u32>,
    /// Forward state, `paths x (steps + 1) x dim`; starts at zero.
    pub state: Vec<f64>,
}

impl PathEnsemble {
    #[inline]
    pub fn dw_at(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.steps + step) * self.brownian_dim;
        &self.dw[base..base + self.brownian_dim]
    }

    #[inline]
    pub fn counts_at(&self, path: usize, step: usize) -> &[u32] {
        let base = (path * self.steps + step) * self.atom_count;
        &self.counts[base..base + self.atom_count]
    }

    #[inline]
    pub fn state_at(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * (self.steps + 1) + step) * self.dim;
        &self.state[base..base + self.dim]
    }

    pub fn terminal_state(&self, path: usize) -> &[f64] {
        self.state_at(path, self.steps)
    }
}

/// Simulate a seeded forward ensemble on the grid.
///
/// The state recursion per step is
/// `X_{i+1} = X_i + a' dt_i + sigma dW_i + Σ_j x_j (counts_{i,j} - λ_j dt_i)`
/// with `a'` the adjusted drift. Paths are generated independently from
/// counter-based streams, so the result does not depend on scheduling.
pub fn simulate_forward(
    model: &LevyModel,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    model.validate()?;
    if paths == 0 {
        return Err(Error::Validation("path count must be >= 1".into()));
    }

    let n = grid.steps();
    let d = model.dim;
    let k = model.brownian_dim;
    let j = model.atoms.len();
    let drift = model.adjusted_drift();

    let per_path: Vec<(Vec<f64>, Vec<u32>, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let mut dw_p = vec![0.0f64; n * k];
            let mut counts_p = vec![0u32; n * j];
            let mut state_p = vec![0.0f64; (n + 1) * d];
            simulate_path(
                model, grid, &drift, seed, path, &mut dw_p, &mut counts_p, &mut state_p,
            );
            (dw_p, counts_p, state_p)
        })
        .collect();

    let mut dw = Vec::with_capacity(paths * n * k);
    let mut counts = Vec::with_capacity(paths * n * j);
    let mut state = Vec::with_capacity(paths * (n + 1) * d);
    for (dw_p, counts_p, state_p) in per_path {
        dw.extend_from_slice(&dw_p);
        counts.extend_from_slice(&counts_p);
        state.extend_from_slice(&state_p);
    }

    Ok(PathEnsemble {
        paths,
        steps: n,
        dim: d,
        brownian_dim: k,
        atom_count: j,
        seed,
        dw,
        counts,
        state,
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate_path(
    model: &LevyModel,
    grid: &TimeGrid,
    drift: &[f64],
    seed: u64,
    path: usize,
    dw: &mut [f64],
    counts: &mut [u32],
    state: &mut [f64],
) {
    let n = grid.steps();
    let d = model.dim;
    let k = model.brownian_dim;
    let j = model.atoms.len();

    for i in 0..n {
        let dt = grid.dt(i);
        let sqrt_dt = dt.sqrt();

        let mut brownian = CounterRng::new(seed, path as u64, i as u64, StreamTag::Brownian);
        for kk in 0..k {
            dw[i * k + kk] = brownian.next_normal() * sqrt_dt;
        }
        let mut poisson = CounterRng::new(seed, path as u64, i as u64, StreamTag::Poisson);
        for (jj, atom) in model.atoms.iter().enumerate() {
            counts[i * j + jj] = poisson.next_poisson(atom.intensity * dt);
        }

        let (prev, next) = state[i * d..(i + 2) * d].split_at_mut(d);
        for dd in 0..d {
            let mut x = prev[dd] + drift[dd] * dt;
            for kk in 0..k {
                x += model.diffusion[dd * k + kk] * dw[i * k + kk];
            }
            for (jj, atom) in model.atoms.iter().enumerate() {
                let compensated = f64::from(counts[i * j + jj]) - atom.intensity * dt;
                x += atom.mark[dd] * compensated;
            }
            next[dd] = x;
        }
    }
}

/// Empirical mean and standard error of a slice.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
