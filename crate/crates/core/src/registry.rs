//! Built-in generators, terminal conditions and modulus families,
//! addressable by stable string ids.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generator::{constant_coef, BetaDecl, CoefficientDecl, GeneratorSpec};
use crate::model::{LevyModel, TimeGrid};
use crate::rho::RhoFunction;
use crate::solver::TerminalCondition;

pub type Overrides = BTreeMap<String, f64>;

/// Sorted ids of the built-in generators.
pub fn generator_ids() -> Vec<&'static str> {
    let mut ids = vec![
        "zero",
        "linear_drift",
        "linear_z",
        "jump_linear",
        "jump_gamma_violating",
        "quadratic_negative",
        "ylogy_osgood",
        "showcase_simplified",
    ];
    ids.sort_unstable();
    ids
}

/// Sorted ids of the built-in terminal conditions.
pub fn terminal_ids() -> Vec<&'static str> {
    let mut ids = vec![
        "zero",
        "constant",
        "state",
        "state_abs",
        "state_pos",
        "state_neg",
    ];
    ids.sort_unstable();
    ids
}

pub fn rho_family_names() -> Vec<&'static str> {
    vec!["linear", "log_osgood"]
}

fn take(overrides: &Overrides, key: &str, default: f64) -> f64 {
    overrides.get(key).copied().unwrap_or(default)
}

fn check_known_keys(id: &str, overrides: &Overrides, known: &[&str]) -> Result<()> {
    for key in overrides.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::Validation(format!(
                "generator '{id}': unknown override key '{key}' (known: {known:?})"
            )));
        }
    }
    Ok(())
}

fn y_log_abs(y: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        -y * y.abs().ln()
    }
}

/// Build a registry generator against a model and grid. Common override
/// keys: `p` (solution exponent) and `f0_shift` (adds a constant to `f` and
/// `f0`, giving the generator a nonzero zero-driver).
pub fn build_generator(
    id: &str,
    model: &LevyModel,
    grid: &TimeGrid,
    overrides: &Overrides,
) -> Result<GeneratorSpec> {
    let p = take(overrides, "p", 2.0);
    if p <= 1.0 {
        return Err(Error::Validation(format!(
            "generator '{id}': p must exceed 1, got {p}"
        )));
    }
    let f0_shift = take(overrides, "f0_shift", 0.0);
    let dim = model.dim;

    let spec = match id {
        "zero" => {
            check_known_keys(id, overrides, &["p", "f0_shift"])?;
            GeneratorSpec::new(
                id,
                p,
                model,
                false,
                CoefficientDecl::zero(),
                Arc::new(move |_t, _y, _z, _u, _ctx, out: &mut [f64]| out.fill(0.0)),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        "linear_drift" => {
            check_known_keys(id, overrides, &["p", "f0_shift"])?;
            GeneratorSpec::new(
                id,
                p,
                model,
                true,
                CoefficientDecl::zero(),
                Arc::new(move |_t, y: &[f64], _z, _u, _ctx, out: &mut [f64]| {
                    for (o, &yi) in out.iter_mut().zip(y) {
                        *o = -yi;
                    }
                }),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        "linear_z" => {
            check_known_keys(id, overrides, &["p", "f0_shift"])?;
            if model.brownian_dim == 0 {
                return Err(Error::Validation(
                    "generator 'linear_z' needs a Brownian component".into(),
                ));
            }
            let k = model.brownian_dim;
            GeneratorSpec::new(
                id,
                p,
                model,
                false,
                CoefficientDecl {
                    beta: BetaDecl::Joint(constant_coef((k as f64).sqrt())),
                    ..CoefficientDecl::zero()
                },
                Arc::new(move |_t, _y, z: &[f64], _u, _ctx, out: &mut [f64]| {
                    for (dd, o) in out.iter_mut().enumerate() {
                        *o = z[dd * k..(dd + 1) * k].iter().sum();
                    }
                }),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        "jump_linear" | "jump_gamma_violating" => {
            check_known_keys(id, overrides, &["p", "f0_shift"])?;
            if dim != 1 {
                return Err(Error::UnsupportedDimension(format!(
                    "generator '{id}' is defined for d = 1"
                )));
            }
            let weight: f64 = if id == "jump_linear" { 1.0 } else { -2.0 };
            let lambdas = model.intensities();
            let lambdas_beta = lambdas.clone();
            let beta = move |_t: f64| {
                weight.abs() * lambdas_beta.iter().sum::<f64>().sqrt()
            };
            GeneratorSpec::new(
                id,
                p,
                model,
                false,
                CoefficientDecl {
                    beta: BetaDecl::Joint(Arc::new(beta)),
                    ..CoefficientDecl::zero()
                },
                Arc::new(move |_t, _y, _z, u: &[f64], _ctx, out: &mut [f64]| {
                    out[0] = weight
                        * lambdas
                            .iter()
                            .zip(u)
                            .map(|(&lam, &uj)| lam * uj)
                            .sum::<f64>();
                }),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        "quadratic_negative" => {
            check_known_keys(id, overrides, &["p", "f0_shift"])?;
            // deliberately violates the monotonicity declaration (mu = 1)
            GeneratorSpec::new(
                id,
                p,
                model,
                true,
                CoefficientDecl {
                    mu: constant_coef(1.0),
                    ..CoefficientDecl::zero()
                },
                Arc::new(move |_t, y: &[f64], _z, _u, _ctx, out: &mut [f64]| {
                    for (o, &yi) in out.iter_mut().zip(y) {
                        *o = yi * yi;
                    }
                }),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        "ylogy_osgood" => {
            check_known_keys(id, overrides, &["p", "f0_shift"])?;
            // componentwise -y ln|y|; the grid search behind the declared
            // (alpha, mu) = (d, 1) lives in tests/oracles.rs
            let alpha = dim as f64;
            GeneratorSpec::new(
                id,
                p,
                model,
                true,
                CoefficientDecl {
                    alpha: constant_coef(alpha),
                    mu: constant_coef(1.0),
                    beta: BetaDecl::Joint(constant_coef(0.0)),
                    rho: RhoFunction::log_osgood(1.0),
                },
                Arc::new(move |_t, y: &[f64], _z, _u, _ctx, out: &mut [f64]| {
                    for (o, &yi) in out.iter_mut().zip(y) {
                        *o = y_log_abs(yi);
                    }
                }),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        "showcase_simplified" => {
            check_known_keys(id, overrides, &["p", "f0_shift", "mu0", "b1", "b2", "t_min"])?;
            if dim != 1 {
                return Err(Error::UnsupportedDimension(
                    "generator 'showcase_simplified' is defined for d = 1".into(),
                ));
            }
            let mu0 = take(overrides, "mu0", 0.1);
            let b1 = take(overrides, "b1", 0.5);
            let b2 = take(overrides, "b2", 0.25);
            // clamp below half the first grid step to tame the 1/sqrt(t) factor
            let t_min = take(overrides, "t_min", grid.dt(0) / 2.0);
            let kappas: Vec<f64> = model
                .atoms
                .iter()
                .map(|a| a.mark_norm().min(1.0))
                .collect();
            let lambdas = model.intensities();
            // sqrt(sum lambda kappa^2) converts atomwise sums to the L2(nu) norm
            let s: f64 = lambdas
                .iter()
                .zip(&kappas)
                .map(|(&lam, &kap)| lam * kap * kap)
                .sum::<f64>()
                .sqrt();
            let sampler_radius = 10.0;
            let alpha = Arc::new(move |t: f64| 1.0 / t.max(t_min).sqrt());
            let mu = Arc::new(move |t: f64| {
                1.0 / t.max(t_min).sqrt() + b1.abs() + b2.abs() * s * sampler_radius
            });
            let beta = Arc::new(move |_t: f64| {
                2.0 * b1.abs() + b2.abs() * s * (1.0 + sampler_radius)
            });
            let lam_eval = lambdas;
            let kap_eval = kappas;
            GeneratorSpec::new(
                id,
                p,
                model,
                true,
                CoefficientDecl {
                    alpha,
                    mu,
                    beta: BetaDecl::Joint(beta),
                    rho: RhoFunction::log_osgood(1.0),
                },
                Arc::new(move |t: f64, y: &[f64], z: &[f64], u: &[f64], _ctx, out: &mut [f64]| {
                    let tc = t.max(t_min);
                    let y0 = y[0];
                    let z0 = if z.is_empty() { 0.0 } else { z[0] };
                    let mut jump_term = 0.0;
                    for (j, (&lam, &kap)) in lam_eval.iter().zip(&kap_eval).enumerate() {
                        let uj = u[j];
                        jump_term += lam * kap * ((y0 * kap * uj).atan() + uj);
                    }
                    out[0] = y_log_abs(y0) / tc.sqrt() - mu0 * (y0.powi(3) + y0.cbrt())
                        + b1 * (z0 + z0.sin() * y0.cos())
                        + b2 * jump_term;
                }),
                Arc::new(move |_t, _ctx, out: &mut [f64]| out.fill(0.0)),
            )
        }
        other => {
            return Err(Error::Validation(format!(
                "unknown generator id '{other}' (known: {:?})",
                generator_ids()
            )))
        }
    };

    if f0_shift != 0.0 {
        let mut spec = spec.with_constant_shift(vec![f0_shift; dim]);
        spec.id = id.to_string();
        Ok(spec)
    } else {
        Ok(spec)
    }
}

/// Build a registry terminal condition. `constant` takes `value`; the
/// state-based conditions act componentwise on the terminal forward state.
pub fn build_terminal(id: &str, overrides: &Overrides) -> Result<TerminalCondition> {
    let known: &[&str] = if id == "constant" { &["value"] } else { &[] };
    for key in overrides.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::Validation(format!(
                "terminal '{id}': unknown override key '{key}'"
            )));
        }
    }
    let map: crate::solver::StateMap = match id {
        "zero" => Arc::new(|x: &[f64]| vec![0.0; x.len()]),
        "constant" => {
            let value = take(overrides, "value", 1.0);
            Arc::new(move |x: &[f64]| vec![value; x.len()])
        }
        "state" => Arc::new(|x: &[f64]| x.to_vec()),
        "state_abs" => Arc::new(|x: &[f64]| x.iter().map(|v| v.abs()).collect()),
        "state_pos" => Arc::new(|x: &[f64]| x.iter().map(|v| v.max(0.0)).collect()),
        "state_neg" => Arc::new(|x: &[f64]| x.iter().map(|v| v.min(0.0)).collect()),
        other => {
            return Err(Error::Validation(format!(
                "unknown terminal id '{other}' (known: {:?})",
                terminal_ids()
            )))
        }
    };
    Ok(TerminalCondition::from_state_map(id, map))
}

/// Listing entry for the CLI.
pub fn listing(filter: &str) -> Vec<String> {
    let mut lines = Vec::new();
    for id in generator_ids() {
        lines.push(format!("generator {id}"));
    }
    for id in terminal_ids() {
        lines.push(format!("terminal {id}"));
    }
    for name in rho_family_names() {
        lines.push(format!("rho {name}"));
    }
    if filter.is_empty() {
        lines
    } else {
        lines.retain(|l| l.contains(filter));
        lines
    }
}
