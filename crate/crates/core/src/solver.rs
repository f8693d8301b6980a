//! Backward time stepping on a simulated ensemble: least-squares conditional
//! expectations, Brownian/compensated-count regressions for the integrands,
//! and an implicit step in the state variable for monotone drivers.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{GeneratorSpec, PathContext};
use crate::model::{PathEnsemble, TimeGrid};
use crate::regression::{regress, PolynomialBasis};
use crate::rng::{CounterRng, StreamTag};

/// Map from a terminal forward state to the terminal value in `R^d`.
pub type StateMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Map from a whole forward path to the terminal value in `R^d`.
pub type PathMap = Arc<dyn Fn(&PathEnsemble, usize) -> Vec<f64> + Send + Sync>;

/// Terminal condition: a pure map from a forward path to `R^d`.
#[derive(Clone)]
pub struct TerminalCondition {
    pub id: String,
    map: PathMap,
}

impl TerminalCondition {
    /// Build from a map acting on the terminal state only.
    pub fn from_state_map(id: impl Into<String>, map: StateMap) -> Self {
        TerminalCondition {
            id: id.into(),
            map: Arc::new(move |ens, path| map(ens.terminal_state(path))),
        }
    }

    /// Build from a map that may inspect the whole path.
    pub fn from_path_map(id: impl Into<String>, map: PathMap) -> Self {
        TerminalCondition { id: id.into(), map }
    }

    pub fn evaluate(&self, ensemble: &PathEnsemble, path: usize) -> Vec<f64> {
        (self.map)(ensemble, path)
    }

    /// Path-major values for the whole ensemble; errors on non-finite output.
    pub fn evaluate_all(&self, ensemble: &PathEnsemble) -> Result<Vec<f64>> {
        let dim = ensemble.dim;
        let mut out = Vec::with_capacity(ensemble.paths * dim);
        for path in 0..ensemble.paths {
            let v = self.evaluate(ensemble, path);
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "terminal '{}' returned {} components, expected {dim}",
                    self.id,
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Evaluation {
                    context: format!("terminal '{}' on path {path}", self.id),
                });
            }
            out.extend_from_slice(&v);
        }
        Ok(out)
    }
}

/// Inner solve strategy for the implicit state update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ImplicitMethod {
    /// Damped fixed-point iteration; stalls fall back to bisection when the
    /// state is scalar.
    FixedPoint { damping: f64 },
    /// Safeguarded bisection on the step residual (scalar state only).
    Bisection,
}

impl Default for ImplicitMethod {
    fn default() -> Self {
        ImplicitMethod::FixedPoint { damping: 1.0 }
    }
}

/// Deterministic perturbation of the inner-solve starting iterate, used by
/// the uniqueness harness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitPerturbation {
    pub delta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    /// Total degree of the polynomial regression basis in the forward state.
    pub basis_degree: usize,
    pub implicit: ImplicitMethod,
    pub implicit_tol: f64,
    pub max_inner_iterations: usize,
    pub ridge: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_perturbation: Option<InitPerturbation>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            basis_degree: 2,
            implicit: ImplicitMethod::default(),
            implicit_tol: 1e-12,
            max_inner_iterations: 200,
            ridge: 1e-10,
            init_perturbation: None,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.implicit_tol > 0.0) {
            return Err(Error::Validation("implicit tolerance must be positive".into()));
        }
        if self.ridge < 0.0 {
            return Err(Error::Validation("ridge must be non-negative".into()));
        }
        if let ImplicitMethod::FixedPoint { damping } = self.implicit {
            if !(damping > 0.0 && damping <= 1.0) {
                return Err(Error::Validation("damping must lie in (0, 1]".into()));
            }
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::Validation("max inner iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub inner_iterations_total: u64,
    pub inner_iterations_max: u32,
    /// Largest condition indicator among the step's regressions.
    pub regression_condition_max: f64,
    /// Mean squared residual of the continuation-value fit.
    pub y_fit_residual_var: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveDiagnostics {
    pub steps: Vec<StepDiagnostics>,
}

/// Discrete solution fields over grid x paths. `y` has `steps + 1` layers,
/// `z` and `u` one per step; all path-major.
#[derive(Clone, Debug)]
pub struct BsdeSolution {
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub brownian_dim: usize,
    pub atom_count: usize,
    pub ensemble_seed: u64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl BsdeSolution {
    #[inline]
    pub fn y_at(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * (self.steps + 1) + step) * self.dim;
        &self.y[base..base + self.dim]
    }

    #[inline]
    pub fn z_at(&self, path: usize, step: usize) -> &[f64] {
        let zl = self.dim * self.brownian_dim;
        let base = (path * self.steps + step) * zl;
        &self.z[base..base + zl]
    }

    #[inline]
    pub fn u_at(&self, path: usize, step: usize) -> &[f64] {
        let ul = self.atom_count * self.dim;
        let base = (path * self.steps + step) * ul;
        &self.u[base..base + ul]
    }

    pub fn same_shape(&self, other: &BsdeSolution) -> bool {
        self.paths == other.paths
            && self.steps == other.steps
            && self.dim == other.dim
            && self.brownian_dim == other.brownian_dim
            && self.atom_count == other.atom_count
            && self.ensemble_seed == other.ensemble_seed
    }
}

/// Output of one backward step.
pub struct StepValues {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub diagnostics: StepDiagnostics,
}

struct StepScratch {
    states: Vec<f64>,
    column: Vec<f64>,
    e_fit: Vec<f64>,
}

/// One backward step at index `step`.
///
/// The continuation value `E_i[Y_{i+1}]` is a ridge polynomial fit in the
/// forward state. The integrand estimates regress the centered continuation
/// against the Brownian increment and the compensated counts (centering acts
/// as a control variate and makes the fields invariant under constant shifts
/// of the terminal data):
///   `Z_i  = fit((Y_{i+1} - E_i[Y_{i+1}]) dW_i) / dt_i`
///   `U_ij = fit((Y_{i+1} - E_i[Y_{i+1}]) (N_ij - λ_j dt_i)) / (λ_j dt_i)`.
/// The state itself solves `y = E_i[Y_{i+1}] + dt_i f(t_i, y, Z_i, U_i)` per
/// path (explicit when `f` ignores `y`).
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    spec: &GeneratorSpec,
    ensemble: &PathEnsemble,
    grid: &TimeGrid,
    step: usize,
    y_next: &[f64],
    intensities: &[f64],
    basis: &PolynomialBasis,
    config: &SchemeConfig,
) -> Result<StepValues> {
    let m = ensemble.paths;
    let d = spec.dim;
    let k = spec.brownian_dim;
    let atoms = spec.atom_count();
    let zl = d * k;
    let ul = atoms * d;
    let dt = grid.dt(step);
    let t = grid.node(step);

    let mut scratch = StepScratch {
        states: vec![0.0; m * d],
        column: vec![0.0; m],
        e_fit: vec![0.0; m * d],
    };
    for path in 0..m {
        scratch.states[path * d..(path + 1) * d]
            .copy_from_slice(ensemble.state_at(path, step));
    }

    // a degenerate design (all states equal, e.g. the deterministic start
    // node) carries no information beyond the mean
    let degenerate =
        (1..m).all(|path| ensemble.state_at(path, step) == ensemble.state_at(0, step));
    let degree_zero;
    let basis = if degenerate && basis.degree > 0 {
        degree_zero = PolynomialBasis::new(d, 0);
        &degree_zero
    } else {
        basis
    };

    let mut diagnostics = StepDiagnostics {
        step,
        ..StepDiagnostics::default()
    };

    // continuation fit per component
    for dd in 0..d {
        for path in 0..m {
            scratch.column[path] = y_next[path * d + dd];
        }
        let fit = regress(&scratch.column, &scratch.states, d, basis, config.ridge)
            .map_err(|e| e.at_step(step))?;
        diagnostics.regression_condition_max =
            diagnostics.regression_condition_max.max(fit.condition);
        diagnostics.y_fit_residual_var = diagnostics.y_fit_residual_var.max(fit.residual_var);
        for path in 0..m {
            scratch.e_fit[path * d + dd] = fit.fitted[path];
        }
    }

    // integrand regressions on the centered continuation
    let mut z = vec![0.0f64; m * zl];
    for dd in 0..d {
        for kk in 0..k {
            for path in 0..m {
                let centered = y_next[path * d + dd] - scratch.e_fit[path * d + dd];
                scratch.column[path] = centered * ensemble.dw_at(path, step)[kk];
            }
            let fit = regress(&scratch.column, &scratch.states, d, basis, config.ridge)
                .map_err(|e| e.at_step(step))?;
            diagnostics.regression_condition_max =
                diagnostics.regression_condition_max.max(fit.condition);
            for path in 0..m {
                z[path * zl + dd * k + kk] = fit.fitted[path] / dt;
            }
        }
    }

    let mut u = vec![0.0f64; m * ul];
    for (jj, &lambda) in intensities.iter().enumerate() {
        let lam_dt = lambda * dt;
        if lam_dt < 1e-14 {
            continue; // U_j = 0 by convention
        }
        for dd in 0..d {
            for path in 0..m {
                let centered = y_next[path * d + dd] - scratch.e_fit[path * d + dd];
                let compensated = f64::from(ensemble.counts_at(path, step)[jj]) - lam_dt;
                scratch.column[path] = centered * compensated;
            }
            let fit = regress(&scratch.column, &scratch.states, d, basis, config.ridge)
                .map_err(|e| e.at_step(step))?;
            diagnostics.regression_condition_max =
                diagnostics.regression_condition_max.max(fit.condition);
            for path in 0..m {
                u[path * ul + jj * d + dd] = fit.fitted[path] / lam_dt;
            }
        }
    }

    // state update
    let mut y = vec![0.0f64; m * d];
    let iter_stats: Vec<u32> = y
        .par_chunks_mut(d)
        .enumerate()
        .map(|(path, y_path)| -> Result<u32> {
            let e = &scratch.e_fit[path * d..(path + 1) * d];
            let z_path = &z[path * zl..(path + 1) * zl];
            let u_path = &u[path * ul..(path + 1) * ul];
            let ctx = PathContext {
                path,
                state: ensemble.state_at(path, step),
            };
            let iterations = if spec.depends_on_y {
                solve_state(
                    spec, t, dt, e, z_path, u_path, &ctx, config, step, path, y_path,
                )?
            } else {
                let zero_y = vec![0.0; d];
                let mut fval = vec![0.0; d];
                spec.eval(t, &zero_y, z_path, u_path, &ctx, &mut fval);
                for dd in 0..d {
                    y_path[dd] = e[dd] + dt * fval[dd];
                }
                0
            };
            if y_path.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    context: format!("state update at step {step}, path {path}"),
                });
            }
            Ok(iterations)
        })
        .collect::<Result<Vec<u32>>>()?;

    for its in iter_stats {
        diagnostics.inner_iterations_total += u64::from(its);
        diagnostics.inner_iterations_max = diagnostics.inner_iterations_max.max(its);
    }

    Ok(StepValues {
        y,
        z,
        u,
        diagnostics,
    })
}

/// Residual `y - e - dt f(t, y, z, u)`, infinity norm.
#[allow(clippy::too_many_arguments)]
fn residual(
    spec: &GeneratorSpec,
    t: f64,
    dt: f64,
    e: &[f64],
    z: &[f64],
    u: &[f64],
    ctx: &PathContext,
    y: &[f64],
    fbuf: &mut [f64],
) -> f64 {
    spec.eval(t, y, z, u, ctx, fbuf);
    y.iter()
        .zip(e)
        .zip(fbuf.iter())
        .map(|((yi, ei), fi)| (yi - ei - dt * fi).abs())
        .fold(0.0f64, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn solve_state(
    spec: &GeneratorSpec,
    t: f64,
    dt: f64,
    e: &[f64],
    z: &[f64],
    u: &[f64],
    ctx: &PathContext,
    config: &SchemeConfig,
    step: usize,
    path: usize,
    out: &mut [f64],
) -> Result<u32> {
    let d = spec.dim;
    let mut y = e.to_vec();
    if let Some(pert) = config.init_perturbation {
        let mut rng = CounterRng::new(pert.seed, path as u64, step as u64, StreamTag::Perturbation);
        for yi in y.iter_mut() {
            *yi += pert.delta * rng.next_symmetric(1.0);
        }
    }

    match config.implicit {
        ImplicitMethod::Bisection => {
            if d != 1 {
                return Err(Error::UnsupportedDimension(
                    "bisection inner solve needs a scalar state".into(),
                ));
            }
            let its = bisect_state(spec, t, dt, e, z, u, ctx, config, step, path, out)?;
            Ok(its)
        }
        ImplicitMethod::FixedPoint { damping } => {
            let mut theta = damping;
            let mut fbuf = vec![0.0; d];
            let mut res = residual(spec, t, dt, e, z, u, ctx, &y, &mut fbuf);
            if res == 0.0 {
                // already a fixed point (zero-data fast path)
                out.copy_from_slice(&y);
                return Ok(0);
            }
            let mut its = 0u32;
            let max_fp = (config.max_inner_iterations / 2).max(8);
            while res > config.implicit_tol && (its as usize) < max_fp {
                // fbuf holds f(y) from the last residual evaluation
                let mut improved = false;
                for _ in 0..8 {
                    let candidate: Vec<f64> = y
                        .iter()
                        .zip(e)
                        .zip(fbuf.clone())
                        .map(|((yi, ei), fi)| (1.0 - theta) * yi + theta * (ei + dt * fi))
                        .collect();
                    let cand_res = residual(spec, t, dt, e, z, u, ctx, &candidate, &mut fbuf);
                    its += 1;
                    if cand_res <= res {
                        y = candidate;
                        res = cand_res;
                        improved = true;
                        break;
                    }
                    // not contracting at this damping: halve and retry
                    theta *= 0.5;
                    spec.eval(t, &y, z, u, ctx, &mut fbuf);
                    if theta < 1e-3 {
                        break;
                    }
                }
                if !improved {
                    break;
                }
            }
            if res <= config.implicit_tol {
                // polish: two undamped applications tighten the fixed point
                for _ in 0..2 {
                    spec.eval(t, &y, z, u, ctx, &mut fbuf);
                    let candidate: Vec<f64> = e
                        .iter()
                        .zip(fbuf.iter())
                        .map(|(ei, fi)| ei + dt * fi)
                        .collect();
                    let cand_res = residual(spec, t, dt, e, z, u, ctx, &candidate, &mut fbuf);
                    if cand_res <= res {
                        y = candidate;
                        res = cand_res;
                        its += 1;
                    } else {
                        break;
                    }
                }
                out.copy_from_slice(&y);
                return Ok(its);
            }
            if d == 1 {
                let bits = bisect_state(spec, t, dt, e, z, u, ctx, config, step, path, out)?;
                return Ok(its + bits);
            }
            Err(Error::ImplicitSolve {
                path,
                step,
                residual: res,
            })
        }
    }
}

/// Safeguarded bisection on the scalar residual. The bracket is centered on
/// the continuation value and expanded geometrically; monotone generators
/// give a monotone residual for small steps.
#[allow(clippy::too_many_arguments)]
fn bisect_state(
    spec: &GeneratorSpec,
    t: f64,
    dt: f64,
    e: &[f64],
    z: &[f64],
    u: &[f64],
    ctx: &PathContext,
    config: &SchemeConfig,
    step: usize,
    path: usize,
    out: &mut [f64],
) -> Result<u32> {
    let mut fbuf = [0.0f64];
    let g = |y: f64, fbuf: &mut [f64; 1]| -> f64 {
        spec.eval(t, &[y], z, u, ctx, fbuf);
        y - e[0] - dt * fbuf[0]
    };
    let mut its = 0u32;
    let mut width = 1.0 + 2.0 * dt * {
        spec.eval(t, &[e[0]], z, u, ctx, &mut fbuf);
        fbuf[0].abs()
    };
    let (mut lo, mut hi) = (e[0] - width, e[0] + width);
    let (mut glo, mut ghi) = (g(lo, &mut fbuf), g(hi, &mut fbuf));
    its += 3;
    let mut expansions = 0;
    while glo > 0.0 || ghi < 0.0 {
        expansions += 1;
        if expansions > 70 || !glo.is_finite() || !ghi.is_finite() {
            return Err(Error::ImplicitSolve {
                path,
                step,
                residual: glo.abs().min(ghi.abs()),
            });
        }
        width *= 2.0;
        if glo > 0.0 {
            lo = e[0] - width;
            glo = g(lo, &mut fbuf);
            its += 1;
        }
        if ghi < 0.0 {
            hi = e[0] + width;
            ghi = g(hi, &mut fbuf);
            its += 1;
        }
    }
    // bisect essentially to machine width; the bracket guarantees a root
    for _ in 0..config.max_inner_iterations.max(120) {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let gm = g(mid, &mut fbuf);
        its += 1;
        if gm >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) * 4.0 {
            break;
        }
    }
    out[0] = 0.5 * (lo + hi);
    Ok(its)
}

/// Solve the discrete backward equation `(xi, f)` on the ensemble.
pub fn solve_bsde(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    ensemble: &PathEnsemble,
    grid: &TimeGrid,
    config: &SchemeConfig,
) -> Result<BsdeSolution> {
    config.validate()?;
    if spec.dim != ensemble.dim
        || spec.brownian_dim != ensemble.brownian_dim
        || spec.atom_count() != ensemble.atom_count
    {
        return Err(Error::Validation(format!(
            "generator dims (d={}, k={}, atoms={}) do not match ensemble (d={}, k={}, atoms={})",
            spec.dim,
            spec.brownian_dim,
            spec.atom_count(),
            ensemble.dim,
            ensemble.brownian_dim,
            ensemble.atom_count
        )));
    }
    if ensemble.steps != grid.steps() {
        return Err(Error::Validation(format!(
            "ensemble has {} steps, grid {}",
            ensemble.steps,
            grid.steps()
        )));
    }

    let m = ensemble.paths;
    let n = ensemble.steps;
    let d = spec.dim;
    let basis = PolynomialBasis::new(d, config.basis_degree);
    if m < basis.len() {
        return Err(Error::Regression {
            step: n,
            reason: format!("{m} paths < basis dimension {}", basis.len()),
            condition: f64::INFINITY,
        });
    }

    let xi = terminal.evaluate_all(ensemble)?;
    let zl = d * spec.brownian_dim;
    let ul = spec.atom_count() * d;

    let mut y = vec![0.0f64; m * (n + 1) * d];
    let mut z = vec![0.0f64; m * n * zl];
    let mut u = vec![0.0f64; m * n * ul];
    for path in 0..m {
        y[(path * (n + 1) + n) * d..(path * (n + 1) + n + 1) * d]
            .copy_from_slice(&xi[path * d..(path + 1) * d]);
    }

    let mut diagnostics = SolveDiagnostics {
        steps: Vec::with_capacity(n),
    };
    let mut y_next = xi;
    for step in (0..n).rev() {
        let values = backward_step(
            spec,
            ensemble,
            grid,
            step,
            &y_next,
            &spec.atom_intensities,
            &basis,
            config,
        )?;
        for path in 0..m {
            y[(path * (n + 1) + step) * d..(path * (n + 1) + step + 1) * d]
                .copy_from_slice(&values.y[path * d..(path + 1) * d]);
            if zl > 0 {
                z[(path * n + step) * zl..(path * n + step + 1) * zl]
                    .copy_from_slice(&values.z[path * zl..(path + 1) * zl]);
            }
            if ul > 0 {
                u[(path * n + step) * ul..(path * n + step + 1) * ul]
                    .copy_from_slice(&values.u[path * ul..(path + 1) * ul]);
            }
        }
        diagnostics.steps.push(values.diagnostics);
        y_next = values.y;
    }
    diagnostics.steps.reverse();

    Ok(BsdeSolution {
        paths: m,
        steps: n,
        dim: d,
        brownian_dim: spec.brownian_dim,
        atom_count: spec.atom_count(),
        ensemble_seed: ensemble.seed,
        y,
        z,
        u,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_forward, LevyModel};
    use crate::registry;

    fn deterministic_setup(
        n: usize,
    ) -> (LevyModel, TimeGrid, PathEnsemble, SchemeConfig) {
        let model = LevyModel::deterministic(1, vec![0.0]);
        let grid = TimeGrid::uniform(1.0, n);
        let ensemble = simulate_forward(&model, &grid, 1, 0).unwrap();
        let config = SchemeConfig {
            basis_degree: 0,
            ridge: 0.0,
            ..SchemeConfig::default()
        };
        (model, grid, ensemble, config)
    }

    #[test]
    fn scalar_implicit_euler_single_step() {
        // no noise, f(y) = -y, Y_next = 1 => Y_i = 1/(1 + dt)
        let (model, grid, ensemble, config) = deterministic_setup(10);
        let spec =
            registry::build_generator("linear_drift", &model, &grid, &Default::default()).unwrap();
        let basis = PolynomialBasis::new(1, 0);
        let values = backward_step(
            &spec,
            &ensemble,
            &grid,
            0,
            &[1.0],
            &[],
            &basis,
            &config,
        )
        .unwrap();
        let dt = grid.dt(0);
        assert!((values.y[0] - 1.0 / (1.0 + dt)).abs() < 1e-11);
    }

    #[test]
    fn implicit_step_matches_bisection_oracle() {
        // y + 0.01 y ln y = e, root from an independent bisection
        let (model, _, _, config) = deterministic_setup(10);
        let grid = TimeGrid::uniform(1.0, 100); // dt = 0.01
        let ensemble = simulate_forward(&model, &grid, 1, 0).unwrap();
        let spec =
            registry::build_generator("ylogy_osgood", &model, &grid, &Default::default()).unwrap();
        let basis = PolynomialBasis::new(1, 0);
        let e = std::f64::consts::E;
        let values = backward_step(
            &spec,
            &ensemble,
            &grid,
            0,
            &[e],
            &[],
            &basis,
            &config,
        )
        .unwrap();
        // oracle: bisection on y + 0.01 y ln y - e over [1, e]
        let (mut lo, mut hi) = (1.0f64, e);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + 0.01 * mid * mid.ln() - e > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - 2.6915).abs() < 1e-3, "oracle sanity: {oracle}");
        assert!(
            (values.y[0] - oracle).abs() < 1e-10,
            "step {} vs oracle {oracle}",
            values.y[0]
        );
    }

    #[test]
    fn bisection_method_agrees_with_fixed_point() {
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 12);
        let ensemble = simulate_forward(&model, &grid, 300, 77).unwrap();
        let spec =
            registry::build_generator("ylogy_osgood", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("state_abs", &Default::default()).unwrap();
        let fixed = solve_bsde(&spec, &terminal, &ensemble, &grid, &SchemeConfig::default())
            .unwrap();
        let bisected = solve_bsde(
            &spec,
            &terminal,
            &ensemble,
            &grid,
            &SchemeConfig {
                implicit: ImplicitMethod::Bisection,
                ..SchemeConfig::default()
            },
        )
        .unwrap();
        let max_dy = fixed
            .y
            .iter()
            .zip(&bisected.y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dy <= 1e-9, "methods diverge by {max_dy}");
    }

    #[test]
    fn bisection_method_needs_scalar_state() {
        let model = LevyModel::deterministic(2, vec![0.0, 0.0]);
        let grid = TimeGrid::uniform(1.0, 4);
        let ensemble = simulate_forward(&model, &grid, 4, 0).unwrap();
        let spec =
            registry::build_generator("linear_drift", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("constant", &Default::default()).unwrap();
        let err = solve_bsde(
            &spec,
            &terminal,
            &ensemble,
            &grid,
            &SchemeConfig {
                basis_degree: 0,
                implicit: ImplicitMethod::Bisection,
                ..SchemeConfig::default()
            },
        );
        assert!(matches!(err, Err(Error::UnsupportedDimension(_))));
    }

    #[test]
    fn ode_exponential_decay() {
        // f(y) = -y, xi = 1, T = 1: Y_0 -> exp(-1)
        let (model, grid, ensemble, config) = deterministic_setup(1000);
        let spec =
            registry::build_generator("linear_drift", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("constant", &Default::default()).unwrap();
        let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
        assert!((sol.y_at(0, 0)[0] - (-1.0f64).exp()).abs() < 1e-3);
        // terminal layer is exactly xi
        assert_eq!(sol.y_at(0, grid.steps())[0], 1.0);
    }

    #[test]
    fn grid_refinement_improves_the_ode_error() {
        let exact = (-1.0f64).exp();
        let mut errors = Vec::new();
        for n in [250, 500, 1000] {
            let (model, grid, ensemble, config) = deterministic_setup(n);
            let spec =
                registry::build_generator("linear_drift", &model, &grid, &Default::default())
                    .unwrap();
            let terminal = registry::build_terminal("constant", &Default::default()).unwrap();
            let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
            errors.push((sol.y_at(0, 0)[0] - exact).abs());
        }
        assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    }

    #[test]
    fn zero_data_solution_is_exactly_zero() {
        let model = LevyModel {
            dim: 1,
            brownian_dim: 1,
            drift: vec![0.0],
            diffusion: vec![1.0],
            atoms: vec![crate::model::JumpAtom {
                mark: vec![1.0],
                intensity: 0.5,
            }],
        };
        let grid = TimeGrid::uniform(1.0, 8);
        let ensemble = simulate_forward(&model, &grid, 200, 11).unwrap();
        let spec =
            registry::build_generator("ylogy_osgood", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("zero", &Default::default()).unwrap();
        let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &SchemeConfig::default()).unwrap();
        assert!(sol.y.iter().all(|&v| v == 0.0));
        assert!(sol.z.iter().all(|&v| v == 0.0));
        assert!(sol.u.iter().all(|&v| v == 0.0));
        // implicit solves converged on the first iterate
        for step in &sol.diagnostics.steps {
            assert_eq!(step.inner_iterations_max, 0);
        }
    }

    #[test]
    fn nonuniform_grid_implicit_euler_is_exact_per_step() {
        // f(y) = -y on an irregular grid: Y_0 = prod_i 1/(1 + dt_i)
        let model = LevyModel::deterministic(1, vec![0.0]);
        let nodes = vec![0.0, 0.05, 0.2, 0.21, 0.6, 1.0];
        let grid = TimeGrid::from_nodes(nodes).unwrap();
        let ensemble = simulate_forward(&model, &grid, 1, 0).unwrap();
        let spec =
            registry::build_generator("linear_drift", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("constant", &Default::default()).unwrap();
        let config = SchemeConfig {
            basis_degree: 0,
            ridge: 0.0,
            ..SchemeConfig::default()
        };
        let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
        let expected: f64 = (0..grid.steps()).map(|i| 1.0 / (1.0 + grid.dt(i))).product();
        assert!((sol.y_at(0, 0)[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn vector_state_ode_decays_componentwise() {
        let model = LevyModel::deterministic(2, vec![0.0, 0.0]);
        let grid = TimeGrid::uniform(1.0, 500);
        let ensemble = simulate_forward(&model, &grid, 1, 0).unwrap();
        let spec =
            registry::build_generator("linear_drift", &model, &grid, &Default::default()).unwrap();
        let terminal = TerminalCondition::from_state_map(
            "pair",
            std::sync::Arc::new(|_: &[f64]| vec![1.0, 2.0]),
        );
        let config = SchemeConfig {
            basis_degree: 0,
            ..SchemeConfig::default()
        };
        let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
        let decay = (-1.0f64).exp();
        assert!((sol.y_at(0, 0)[0] - decay).abs() < 2e-3);
        assert!((sol.y_at(0, 0)[1] - 2.0 * decay).abs() < 4e-3);
    }

    #[test]
    fn vanishing_jump_rate_gives_zero_u_by_convention() {
        let model = LevyModel {
            dim: 1,
            brownian_dim: 1,
            drift: vec![0.0],
            diffusion: vec![1.0],
            atoms: vec![
                crate::model::JumpAtom {
                    mark: vec![1.0],
                    intensity: 1e-16,
                },
                crate::model::JumpAtom {
                    mark: vec![0.5],
                    intensity: 2.0,
                },
            ],
        };
        let grid = TimeGrid::uniform(1.0, 8);
        let ensemble = simulate_forward(&model, &grid, 300, 9).unwrap();
        let spec =
            registry::build_generator("zero", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("state", &Default::default()).unwrap();
        let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &SchemeConfig::default()).unwrap();
        for path in 0..sol.paths {
            for step in 0..sol.steps {
                assert_eq!(sol.u_at(path, step)[0], 0.0, "atom 0 must stay zero");
            }
        }
        // the live atom produces a nontrivial field
        assert!(sol.u.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn determinism_is_bitwise() {
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 10);
        let ensemble = simulate_forward(&model, &grid, 500, 7).unwrap();
        let spec =
            registry::build_generator("ylogy_osgood", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("state_abs", &Default::default()).unwrap();
        let config = SchemeConfig::default();
        let a = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
        let b = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.z, b.z);
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 4);
        let ensemble = simulate_forward(&model, &grid, 16, 1).unwrap();
        let other = LevyModel::deterministic(1, vec![0.0]);
        let spec =
            registry::build_generator("zero", &other, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("zero", &Default::default()).unwrap();
        let err = solve_bsde(&spec, &terminal, &ensemble, &grid, &SchemeConfig::default());
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
