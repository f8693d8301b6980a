//! Solution-norm estimators and the qualitative property harnesses:
//! data-scaling stability, control of the integrand norms by the state,
//! truncation convergence, uniform integrability, and uniqueness under
//! perturbed inner solves.

use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{estimate_psi, SamplerConfig};
use crate::error::{Error, Result};
use crate::generator::{
    euclidean_norm, lnu_norm_weighted, truncate_generator, truncate_terminal, GeneratorSpec,
    PathContext,
};
use crate::model::{PathEnsemble, TimeGrid};
use crate::rho::RhoFunction;
use crate::solver::{solve_bsde, BsdeSolution, InitPerturbation, SchemeConfig, TerminalCondition};

/// Empirical solution norms at exponent `p`:
/// running-supremum norm of the state, quadratic time-integral norms of the
/// two integrands, and the integrated zero-driver.
#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub p: f64,
    pub sp: f64,
    pub lpw: f64,
    pub lpn: f64,
    pub i_f0: f64,
}

/// Per-path statistics underlying a [`NormReport`]; kept for paired
/// standard errors under common random numbers.
#[derive(Clone, Debug)]
pub struct PathStats {
    pub p: f64,
    /// `sup_i |Y_i|^p` per path.
    pub sup_y_p: Vec<f64>,
    /// `(Σ_i |Z_i|^2 dt_i)^{p/2}` per path.
    pub z_quad_p: Vec<f64>,
    /// `(Σ_i ||U_i||^2 dt_i)^{p/2}` per path.
    pub u_quad_p: Vec<f64>,
    /// `(Σ_i |f0(t_i)| dt_i)^p` per path.
    pub i_f0_p: Vec<f64>,
}

impl PathStats {
    fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    pub fn report(&self) -> NormReport {
        let p = self.p;
        NormReport {
            p,
            sp: Self::mean(&self.sup_y_p).powf(1.0 / p),
            lpw: Self::mean(&self.z_quad_p).powf(1.0 / p),
            lpn: Self::mean(&self.u_quad_p).powf(1.0 / p),
            i_f0: Self::mean(&self.i_f0_p).powf(1.0 / p),
        }
    }
}

/// Compute the per-path statistics of a solution.
pub fn path_stats(
    sol: &BsdeSolution,
    spec: &GeneratorSpec,
    grid: &TimeGrid,
    p: f64,
) -> PathStats {
    assert!(p > 0.0, "norm exponent must be positive");
    let m = sol.paths;
    let n = sol.steps;
    let weights = &spec.atom_intensities;
    let d = sol.dim;

    let rows: Vec<(f64, f64, f64, f64)> = (0..m)
        .into_par_iter()
        .map(|path| {
            let mut sup_y: f64 = 0.0;
            for i in 0..=n {
                sup_y = sup_y.max(euclidean_norm(sol.y_at(path, i)));
            }
            let mut z_quad = 0.0;
            let mut u_quad = 0.0;
            let mut if0 = 0.0;
            let mut f0 = vec![0.0; d];
            for i in 0..n {
                let dt = grid.dt(i);
                let z = sol.z_at(path, i);
                z_quad += z.iter().map(|v| v * v).sum::<f64>() * dt;
                let u = sol.u_at(path, i);
                let un = lnu_norm_weighted(u, weights, d);
                u_quad += un * un * dt;
                let ctx = PathContext { path, state: &[] };
                spec.zero_driver(grid.node(i), &ctx, &mut f0);
                if0 += euclidean_norm(&f0) * dt;
            }
            (
                sup_y.powf(p),
                z_quad.powf(p / 2.0),
                u_quad.powf(p / 2.0),
                if0.powf(p),
            )
        })
        .collect();

    let mut stats = PathStats {
        p,
        sup_y_p: Vec::with_capacity(m),
        z_quad_p: Vec::with_capacity(m),
        u_quad_p: Vec::with_capacity(m),
        i_f0_p: Vec::with_capacity(m),
    };
    for (a, b, c, dd) in rows {
        stats.sup_y_p.push(a);
        stats.z_quad_p.push(b);
        stats.u_quad_p.push(c);
        stats.i_f0_p.push(dd);
    }
    stats
}

/// Riemann-sum/empirical-mean estimates of the solution norms.
pub fn estimate_norms(
    sol: &BsdeSolution,
    spec: &GeneratorSpec,
    grid: &TimeGrid,
    p: f64,
) -> NormReport {
    path_stats(sol, spec, grid, p).report()
}

/// Norms of the difference of two solutions on the same ensemble.
pub fn difference_norms(
    a: &BsdeSolution,
    b: &BsdeSolution,
    spec: &GeneratorSpec,
    grid: &TimeGrid,
    p: f64,
) -> Result<NormReport> {
    if !a.same_shape(b) {
        return Err(Error::Validation(
            "difference norms need solutions of identical shape".into(),
        ));
    }
    let mut diff = a.clone();
    for (x, y) in diff.y.iter_mut().zip(&b.y) {
        *x -= y;
    }
    for (x, y) in diff.z.iter_mut().zip(&b.z) {
        *x -= y;
    }
    for (x, y) in diff.u.iter_mut().zip(&b.u) {
        *x -= y;
    }
    let stats = path_stats(&diff, spec, grid, p);
    Ok(NormReport {
        p,
        sp: PathStats::mean(&stats.sup_y_p).powf(1.0 / p),
        lpw: PathStats::mean(&stats.z_quad_p).powf(1.0 / p),
        lpn: PathStats::mean(&stats.u_quad_p).powf(1.0 / p),
        i_f0: 0.0,
    })
}

/// Ratio of the integrand norms to the state-side expression of the
/// corresponding a priori bound (constants dropped, branch by `p`).
#[derive(Clone, Debug, Serialize)]
pub struct ZuControlReport {
    pub p: f64,
    pub ratio: f64,
    /// True when all data vanished and the ratio is zero by convention.
    pub zero_data: bool,
}

pub fn zu_controlled_by_y(
    sol: &BsdeSolution,
    spec: &GeneratorSpec,
    grid: &TimeGrid,
    p: f64,
) -> ZuControlReport {
    let stats = path_stats(sol, spec, grid, p);
    let numerator = PathStats::mean(&stats.z_quad_p) + PathStats::mean(&stats.u_quad_p);
    let rho = &spec.coefficients.rho;

    let denominator = if p >= 2.0 {
        let rho_term: f64 = stats
            .sup_y_p
            .iter()
            .map(|sup_p| {
                let sup_sq = sup_p.powf(2.0 / p);
                rho.eval(sup_sq).powf(p / 2.0)
            })
            .sum::<f64>()
            / stats.sup_y_p.len() as f64;
        PathStats::mean(&stats.sup_y_p) + rho_term + PathStats::mean(&stats.i_f0_p)
    } else {
        let m = sol.paths;
        let mut alpha_rho = 0.0;
        for path in 0..m {
            let mut acc = 0.0;
            for i in 0..sol.steps {
                let t = grid.node(i);
                let y_norm = euclidean_norm(sol.y_at(path, i));
                acc += (spec.coefficients.alpha)(t) * rho.eval(y_norm.powf(p)) * grid.dt(i);
            }
            alpha_rho += acc;
        }
        PathStats::mean(&stats.sup_y_p) + alpha_rho / m as f64 + PathStats::mean(&stats.i_f0_p)
    };

    if denominator == 0.0 {
        ZuControlReport {
            p,
            ratio: 0.0,
            zero_data: true,
        }
    } else {
        ZuControlReport {
            p,
            ratio: numerator / denominator,
            zero_data: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub scale: f64,
    pub norms: NormReport,
    pub zu: ZuControlReport,
    /// Nonincreasing relative to the previous (larger) scale, within the
    /// paired Monte Carlo slack; the first row is vacuously true.
    pub nonincreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub p: f64,
    pub rows: Vec<SweepRow>,
    pub zero_row_exact: Option<bool>,
    pub zu_ratio_max: f64,
    pub pass: bool,
}

/// Scale the data `(xi, f0) -> (eps xi, eps f0)` over a strictly decreasing
/// list of factors, solving on one shared ensemble (common random numbers).
/// The verdict requires each norm column to be nonincreasing within
/// `2 SE` of the paired per-path differences, and an `eps = 0` row to be
/// exactly zero.
pub fn stability_sweep(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    ensemble: &PathEnsemble,
    grid: &TimeGrid,
    config: &SchemeConfig,
    scales: &[f64],
) -> Result<SweepReport> {
    if scales.len() < 2 || !scales.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Validation(
            "scales must be strictly decreasing with at least two entries".into(),
        ));
    }
    let p = spec.p;
    let xi_base = terminal.evaluate_all(ensemble)?;

    // sweep points are independent solver runs on the shared ensemble
    let solved: Vec<(f64, PathStats, ZuControlReport)> = scales
        .par_iter()
        .map(|&eps| -> Result<_> {
            let scaled_spec = spec.with_scaled_zero_driver(eps);
            let xi: Vec<f64> = xi_base.iter().map(|v| eps * v).collect();
            let terminal_eps = terminal_from_values(&format!("{}*{eps}", terminal.id), xi);
            let sol = solve_bsde(&scaled_spec, &terminal_eps, ensemble, grid, config)?;
            let stats = path_stats(&sol, &scaled_spec, grid, p);
            let zu = zu_controlled_by_y(&sol, &scaled_spec, grid, p);
            Ok((eps, stats, zu))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(solved.len());
    let mut pass = true;
    let mut zero_row_exact = None;
    let mut zu_ratio_max: f64 = 0.0;
    for (idx, (eps, stats, zu)) in solved.iter().enumerate() {
        let mut nonincreasing = true;
        if idx > 0 {
            let prev = &solved[idx - 1].1;
            for (col, prev_col) in [
                (&stats.sup_y_p, &prev.sup_y_p),
                (&stats.z_quad_p, &prev.z_quad_p),
                (&stats.u_quad_p, &prev.u_quad_p),
            ] {
                if !nonincreasing_within_paired_slack(prev_col, col, 2.0) {
                    nonincreasing = false;
                }
            }
        }
        if *eps == 0.0 {
            let report = stats.report();
            let exact = report.sp == 0.0 && report.lpw == 0.0 && report.lpn == 0.0;
            zero_row_exact = Some(exact);
            pass &= exact;
        }
        pass &= nonincreasing;
        zu_ratio_max = zu_ratio_max.max(zu.ratio);
        rows.push(SweepRow {
            scale: *eps,
            norms: stats.report(),
            zu: zu.clone(),
            nonincreasing,
        });
    }
    pass &= zu_ratio_max.is_finite();

    Ok(SweepReport {
        p,
        rows,
        zero_row_exact,
        zu_ratio_max,
        pass,
    })
}

/// `mean(next) <= mean(prev) + slack_se * SE(prev - next)` using the paired
/// per-path differences (common random numbers cancel most of the noise).
fn nonincreasing_within_paired_slack(prev: &[f64], next: &[f64], slack_se: f64) -> bool {
    let m = prev.len() as f64;
    let diffs: Vec<f64> = prev.iter().zip(next).map(|(a, b)| a - b).collect();
    let mean_diff = diffs.iter().sum::<f64>() / m;
    let var = diffs
        .iter()
        .map(|d| (d - mean_diff) * (d - mean_diff))
        .sum::<f64>()
        / (m - 1.0).max(1.0);
    let se = (var / m).sqrt();
    mean_diff >= -slack_se * se
}

pub fn terminal_from_values(id: &str, values: Vec<f64>) -> TerminalCondition {
    let values = std::sync::Arc::new(values);
    TerminalCondition::from_path_map(
        id,
        std::sync::Arc::new(move |ens: &PathEnsemble, path: usize| {
            values[path * ens.dim..(path + 1) * ens.dim].to_vec()
        }),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationRow {
    /// Truncation level, or `None` for the untruncated reference row.
    pub level: Option<u32>,
    pub sp_distance: f64,
    pub lpw_distance: f64,
    pub lpn_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationReport {
    pub p: f64,
    pub radius: f64,
    pub rows: Vec<TruncationRow>,
    pub distances_nonincreasing: bool,
    /// Whether the largest level left every truncation inactive, and if so
    /// whether its distance came out exactly zero.
    pub inactive_level_exact_zero: Option<bool>,
    pub pass: bool,
}

/// Solve with level-truncated generator and terminal data and report the
/// distances to the untruncated solution. Distances must be nonincreasing in
/// the level; a level beyond every active truncation must reproduce the
/// reference bitwise (distance exactly zero).
#[allow(clippy::too_many_arguments)]
pub fn truncation_convergence_study(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    ensemble: &PathEnsemble,
    grid: &TimeGrid,
    config: &SchemeConfig,
    levels: &[u32],
    radius: f64,
    sampler: &SamplerConfig,
) -> Result<TruncationReport> {
    if levels.is_empty() || !levels.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Validation("levels must be strictly increasing".into()));
    }
    let p = spec.p;
    let psi = estimate_psi(spec, radius + 1.0, grid, sampler)?;
    let psi_fn = psi.as_fn();
    let xi_base = terminal.evaluate_all(ensemble)?;

    let reference = solve_bsde(spec, terminal, ensemble, grid, config)?;

    let mut rows = Vec::with_capacity(levels.len() + 1);
    let mut distances: Vec<(f64, f64, f64)> = Vec::with_capacity(levels.len());
    for &level in levels {
        let spec_n = truncate_generator(spec, level, psi_fn.clone());
        let xi_n = truncate_terminal(&xi_base, spec.dim, f64::from(level));
        let terminal_n = terminal_from_values(&format!("{}|c{level}", terminal.id), xi_n);
        let sol_n = solve_bsde(&spec_n, &terminal_n, ensemble, grid, config)?;
        let d = difference_norms(&sol_n, &reference, spec, grid, p)?;
        distances.push((d.sp, d.lpw, d.lpn));
        rows.push(TruncationRow {
            level: Some(level),
            sp_distance: d.sp,
            lpw_distance: d.lpw,
            lpn_distance: d.lpn,
        });
    }
    rows.push(TruncationRow {
        level: None,
        sp_distance: 0.0,
        lpw_distance: 0.0,
        lpn_distance: 0.0,
    });

    let distances_nonincreasing = distances
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1 && w[1].2 <= w[0].2);

    // inactivity of the top level: it must dominate the terminal data, the
    // growth envelope and the integrand magnitudes of the reference run
    let top = f64::from(*levels.last().unwrap());
    let xi_max = xi_base
        .chunks(spec.dim.max(1))
        .map(euclidean_norm)
        .fold(0.0f64, f64::max);
    let mut zu_max: f64 = 0.0;
    for path in 0..reference.paths {
        for i in 0..reference.steps {
            zu_max = zu_max.max(euclidean_norm(reference.z_at(path, i)));
            zu_max = zu_max.max(lnu_norm_weighted(
                reference.u_at(path, i),
                &spec.atom_intensities,
                spec.dim,
            ));
        }
    }
    let inactive = top >= xi_max && top >= psi.max_value() && top >= zu_max;
    let inactive_level_exact_zero = if inactive {
        let last = distances.last().unwrap();
        Some(last.0 == 0.0 && last.1 == 0.0 && last.2 == 0.0)
    } else {
        None
    };

    let pass = distances_nonincreasing && inactive_level_exact_zero.unwrap_or(true);
    Ok(TruncationReport {
        p,
        radius,
        rows,
        distances_nonincreasing,
        inactive_level_exact_zero,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformIntegrabilityReport {
    pub p: f64,
    pub rho: RhoFunction,
    pub levels: Vec<u32>,
    pub moment_sequence: Vec<f64>,
    pub rho_sequence: Vec<f64>,
    pub threshold_rel: f64,
    pub pass: bool,
}

/// For `V_n = xi / n` over doubling levels, report `E|V_n|^p` and
/// `E[rho(|V_n|^2)^{p/2}]`; the verdict requires both sequences to fall
/// below `threshold_rel` times their initial values at the last level.
pub fn uniform_integrability_check(
    rho: &RhoFunction,
    p: f64,
    xi_samples: &[f64],
    max_level_exponent: u32,
    threshold_rel: f64,
) -> Result<UniformIntegrabilityReport> {
    if xi_samples.is_empty() {
        return Err(Error::Validation("need terminal samples".into()));
    }
    if !(p > 0.0) || !(threshold_rel > 0.0) {
        return Err(Error::Validation("p and threshold must be positive".into()));
    }
    let m = xi_samples.len() as f64;
    let levels: Vec<u32> = (0..=max_level_exponent).map(|k| 1u32 << k).collect();
    let mut moment_sequence = Vec::with_capacity(levels.len());
    let mut rho_sequence = Vec::with_capacity(levels.len());
    for &n in &levels {
        let inv = 1.0 / f64::from(n);
        let mut moment = 0.0;
        let mut rho_mean = 0.0;
        for &xi in xi_samples {
            let v = (xi * inv).abs();
            moment += v.powf(p);
            rho_mean += rho.eval(v * v).powf(p / 2.0);
        }
        moment_sequence.push(moment / m);
        rho_sequence.push(rho_mean / m);
    }
    let below = |seq: &[f64]| -> bool {
        let first = seq[0];
        if first == 0.0 {
            seq.iter().all(|&v| v == 0.0)
        } else {
            *seq.last().unwrap() <= threshold_rel * first
        }
    };
    let pass = below(&moment_sequence) && below(&rho_sequence);
    Ok(UniformIntegrabilityReport {
        p,
        rho: *rho,
        levels,
        moment_sequence,
        rho_sequence,
        threshold_rel,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub delta: f64,
    pub max_abs_dy: f64,
    pub bit_identical: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// Solve `(xi, f)` twice, the second time starting every inner solve from a
/// deterministically perturbed iterate. The discrete fixed points must
/// coincide: bitwise for `delta = 0`, within ten inner tolerances otherwise.
pub fn uniqueness_perturbation(
    spec: &GeneratorSpec,
    terminal: &TerminalCondition,
    ensemble: &PathEnsemble,
    grid: &TimeGrid,
    config: &SchemeConfig,
    delta: f64,
    perturbation_seed: u64,
) -> Result<UniquenessReport> {
    if delta < 0.0 {
        return Err(Error::Validation("delta must be >= 0".into()));
    }
    let base = solve_bsde(spec, terminal, ensemble, grid, config)?;
    let mut perturbed_config = config.clone();
    perturbed_config.init_perturbation = Some(InitPerturbation {
        delta,
        seed: perturbation_seed,
    });
    let perturbed = solve_bsde(spec, terminal, ensemble, grid, &perturbed_config)?;

    let bit_identical = base.y == perturbed.y && base.z == perturbed.z && base.u == perturbed.u;
    let max_abs_dy = base
        .y
        .iter()
        .zip(&perturbed.y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let tolerance = 10.0 * config.implicit_tol;
    let pass = if delta == 0.0 {
        bit_identical
    } else {
        max_abs_dy <= tolerance
    };
    Ok(UniquenessReport {
        delta,
        max_abs_dy,
        bit_identical,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_forward, LevyModel};
    use crate::registry;

    #[test]
    fn constant_fields_give_closed_form_norms() {
        // build a synthetic solution by hand: Y = 2, Z = 1, single atom
        // lambda = 2 with U = 3, horizon 1
        let model = LevyModel {
            dim: 1,
            brownian_dim: 1,
            drift: vec![0.0],
            diffusion: vec![1.0],
            atoms: vec![crate::model::JumpAtom {
                mark: vec![1.0],
                intensity: 2.0,
            }],
        };
        let grid = TimeGrid::uniform(1.0, 10);
        let spec =
            registry::build_generator("zero", &model, &grid, &Default::default()).unwrap();
        let (m, n) = (7usize, grid.steps());
        let sol = BsdeSolution {
            paths: m,
            steps: n,
            dim: 1,
            brownian_dim: 1,
            atom_count: 1,
            ensemble_seed: 0,
            y: vec![2.0; m * (n + 1)],
            z: vec![1.0; m * n],
            u: vec![3.0; m * n],
            diagnostics: Default::default(),
        };
        for p in [1.5, 2.0, 3.0] {
            let norms = estimate_norms(&sol, &spec, &grid, p);
            assert!((norms.sp - 2.0).abs() < 1e-12);
            assert!((norms.lpw - 1.0).abs() < 1e-12);
            // ||U|| = sqrt(2 * 9) = sqrt(18)
            assert!((norms.lpn - 18f64.sqrt()).abs() < 1e-12);
            assert_eq!(norms.i_f0, 0.0);
        }
    }

    #[test]
    fn sp_norm_is_monotone_in_p() {
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 10);
        let ensemble = simulate_forward(&model, &grid, 400, 5).unwrap();
        let spec =
            registry::build_generator("zero", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("state", &Default::default()).unwrap();
        let sol = solve_bsde(
            &spec,
            &terminal,
            &ensemble,
            &grid,
            &SchemeConfig {
                basis_degree: 1,
                ..SchemeConfig::default()
            },
        )
        .unwrap();
        let norms: Vec<f64> = [1.5, 2.0, 3.0]
            .iter()
            .map(|&p| estimate_norms(&sol, &spec, &grid, p).sp)
            .collect();
        assert!(norms[0] <= norms[1] + 1e-12 && norms[1] <= norms[2] + 1e-12, "{norms:?}");
    }

    #[test]
    fn linear_scaling_halves_the_sp_norm_exactly() {
        // f = 0, xi = W_T: the whole scheme is linear in the data
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 8);
        let ensemble = simulate_forward(&model, &grid, 300, 21).unwrap();
        let spec =
            registry::build_generator("zero", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("state", &Default::default()).unwrap();
        let config = SchemeConfig {
            basis_degree: 1,
            ridge: 0.0,
            ..SchemeConfig::default()
        };
        let report = stability_sweep(
            &spec,
            &terminal,
            &ensemble,
            &grid,
            &config,
            &[1.0, 0.5],
        )
        .unwrap();
        let full = report.rows[0].norms.sp;
        let half = report.rows[1].norms.sp;
        assert!((half * 2.0 - full).abs() < 1e-9 * full.max(1.0), "{full} vs {half}");
        assert!(report.pass);
    }

    #[test]
    fn zero_scale_row_is_exactly_zero() {
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 6);
        let ensemble = simulate_forward(&model, &grid, 200, 3).unwrap();
        let spec =
            registry::build_generator("ylogy_osgood", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("state", &Default::default()).unwrap();
        let report = stability_sweep(
            &spec,
            &terminal,
            &ensemble,
            &grid,
            &SchemeConfig::default(),
            &[1.0, 0.0],
        )
        .unwrap();
        assert_eq!(report.zero_row_exact, Some(true));
        let zero_row = &report.rows[1];
        assert!(zero_row.zu.zero_data && zero_row.zu.ratio == 0.0);
    }

    #[test]
    fn scales_must_decrease() {
        let model = LevyModel::standard_brownian();
        let grid = TimeGrid::uniform(1.0, 4);
        let ensemble = simulate_forward(&model, &grid, 50, 1).unwrap();
        let spec = registry::build_generator("zero", &model, &grid, &Default::default()).unwrap();
        let terminal = registry::build_terminal("zero", &Default::default()).unwrap();
        let err = stability_sweep(
            &spec,
            &terminal,
            &ensemble,
            &grid,
            &SchemeConfig::default(),
            &[0.5, 1.0],
        );
        assert!(err.is_err());
    }

    #[test]
    fn uniform_integrability_linear_is_exact_quadratic_decay() {
        let xi: Vec<f64> = (0..500).map(|i| (i as f64 / 250.0) - 1.0).collect();
        let rho = RhoFunction::linear(1.0);
        let report = uniform_integrability_check(&rho, 2.0, &xi, 6, 1e-3).unwrap();
        // E[rho(V_n^2)] = E[xi^2] / n^2 exactly
        let base = report.rho_sequence[0];
        for (idx, &n) in report.levels.iter().enumerate() {
            let expected = base / f64::from(n * n);
            assert!((report.rho_sequence[idx] - expected).abs() < 1e-14);
        }
        assert!(report.pass);
    }

    #[test]
    fn uniform_integrability_zero_samples_are_zero() {
        let xi = vec![0.0; 100];
        let rho = RhoFunction::log_osgood(1.0);
        let report = uniform_integrability_check(&rho, 2.0, &xi, 4, 1e-3).unwrap();
        assert!(report.moment_sequence.iter().all(|&v| v == 0.0));
        assert!(report.rho_sequence.iter().all(|&v| v == 0.0));
        assert!(report.pass);
    }
}
