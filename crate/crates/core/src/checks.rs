//! Sampling-based falsification of the declared generator assumptions.
//!
//! A passing report means "no violation found at the tolerance on the
//! sampled points" — the checkers audit declarations, they do not prove
//! them. Every report records the sampler seed.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{
    euclidean_norm, lnu_norm_weighted, GeneratorSpec, PathContext, PsiFn,
};
use crate::model::{LevyModel, TimeGrid};
use crate::rho::RhoFunction;
use crate::rng::{CounterRng, StreamTag};

/// Ranges for the sampled points of the assumption checks.
#[derive(Clone, Debug, Serialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    /// State arguments are drawn uniformly from `[-y_radius, y_radius]^d`.
    pub y_radius: f64,
    pub z_radius: f64,
    pub u_radius: f64,
    /// Times are drawn uniformly from `[t_floor, horizon]`.
    pub t_floor: f64,
    pub horizon: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples: 100_000,
            seed: 0x5eed,
            y_radius: 10.0,
            z_radius: 10.0,
            u_radius: 10.0,
            t_floor: 1e-3,
            horizon: 1.0,
        }
    }
}

/// Which assumption a report audits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionId {
    Measurability,
    Growth,
    MonotonicityPGe2,
    MonotonicityPLt2,
    JumpComparison,
    RhoBounds,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub assumption: AssumptionId,
    pub generator: String,
    pub samples: usize,
    /// Largest `LHS - RHS` seen; positive means violated.
    pub max_violation: f64,
    pub worst_point: String,
    pub pass: bool,
    pub tolerance: f64,
    pub seed: u64,
}

fn finite_or_err(values: &[f64], context: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            context: context.to_string(),
        });
    }
    Ok(())
}

struct Sample {
    t: f64,
    y: Vec<f64>,
    y_prime: Vec<f64>,
    z: Vec<f64>,
    z_prime: Vec<f64>,
    u: Vec<f64>,
    u_prime: Vec<f64>,
}

fn draw_sample(spec: &GeneratorSpec, cfg: &SamplerConfig, index: u64) -> Sample {
    let mut rng = CounterRng::new(cfg.seed, index, 0, StreamTag::Sampler);
    let t = cfg.t_floor + rng.next_uniform() * (cfg.horizon - cfg.t_floor);
    let draw = |rng: &mut CounterRng, len: usize, radius: f64| -> Vec<f64> {
        (0..len).map(|_| rng.next_symmetric(radius)).collect()
    };
    Sample {
        t,
        y: draw(&mut rng, spec.dim, cfg.y_radius),
        y_prime: draw(&mut rng, spec.dim, cfg.y_radius),
        z: draw(&mut rng, spec.z_len(), cfg.z_radius),
        z_prime: draw(&mut rng, spec.z_len(), cfg.z_radius),
        u: draw(&mut rng, spec.u_len(), cfg.u_radius),
        u_prime: draw(&mut rng, spec.u_len(), cfg.u_radius),
    }
}

/// Scan for violations of the monotonicity inequality matching the declared
/// exponent branch (`p >= 2` or `p < 2`).
pub fn check_monotonicity(
    spec: &GeneratorSpec,
    cfg: &SamplerConfig,
    tolerance: f64,
) -> Result<AssumptionReport> {
    let p = spec.p;
    let ge2 = p >= 2.0;
    let ctx = PathContext::detached();

    let per_sample = |idx: u64| -> Result<(f64, String)> {
        let mut s = draw_sample(spec, cfg, idx);
        if !ge2 {
            // the p < 2 branch divides by |y - y'|; keep the pair separated
            let mut bump = 0;
            while s.y == s.y_prime && bump < 4 {
                s.y_prime[0] += 0.5 * cfg.y_radius;
                bump += 1;
            }
        }
        let mut f = vec![0.0; spec.dim];
        let mut f_prime = vec![0.0; spec.dim];
        spec.eval(s.t, &s.y, &s.z, &s.u, &ctx, &mut f);
        spec.eval(s.t, &s.y_prime, &s.z_prime, &s.u_prime, &ctx, &mut f_prime);
        finite_or_err(&f, &format!("generator '{}' at t={}, y={:?}", spec.id, s.t, s.y))?;
        finite_or_err(
            &f_prime,
            &format!("generator '{}' at t={}, y'={:?}", spec.id, s.t, s.y_prime),
        )?;

        let dy: Vec<f64> = s.y.iter().zip(&s.y_prime).map(|(a, b)| a - b).collect();
        let dy_norm = euclidean_norm(&dy);
        let inner: f64 = dy
            .iter()
            .zip(f.iter().zip(&f_prime))
            .map(|(d, (a, b))| d * (a - b))
            .sum();
        let dz: Vec<f64> = s.z.iter().zip(&s.z_prime).map(|(a, b)| a - b).collect();
        let du: Vec<f64> = s.u.iter().zip(&s.u_prime).map(|(a, b)| a - b).collect();
        let dz_norm = euclidean_norm(&dz);
        let du_norm = lnu_norm_weighted(&du, &spec.atom_intensities, spec.dim);

        let co = &spec.coefficients;
        let alpha = (co.alpha)(s.t);
        let mu = (co.mu)(s.t);
        let rho = &co.rho;

        let (lhs, rhs) = if ge2 {
            let weight = dy_norm.powf(p - 2.0);
            let lhs = weight * inner;
            let beta = co.beta.phi(s.t);
            let rhs = alpha * weight * rho.eval(dy_norm * dy_norm)
                + mu * dy_norm.powf(p)
                + beta * dy_norm.powf(p - 1.0) * (dz_norm + du_norm);
            (lhs, rhs)
        } else {
            let weight = dy_norm.powf(p - 2.0);
            let lhs = weight * inner;
            let (b1, b2) = match &co.beta {
                crate::generator::BetaDecl::Joint(b) => (b(s.t), 0.0),
                crate::generator::BetaDecl::Split { beta1, beta2, .. } => {
                    (beta1(s.t), beta2(s.t))
                }
            };
            let rhs = alpha * rho.eval(dy_norm.powf(p))
                + mu * dy_norm.powf(p)
                + dy_norm.powf(p - 1.0) * (b1 * dz_norm + b2 * du_norm);
            (lhs, rhs)
        };
        let violation = lhs - rhs;
        let point = format!(
            "t={:.4} y={:?} y'={:?} lhs={lhs:.6e} rhs={rhs:.6e}",
            s.t, s.y, s.y_prime
        );
        Ok((violation, point))
    };

    let worst = (0..cfg.samples as u64)
        .into_par_iter()
        .map(per_sample)
        .try_reduce(
            || (f64::NEG_INFINITY, String::new()),
            |a, b| Ok(if b.0 > a.0 { b } else { a }),
        )?;

    Ok(AssumptionReport {
        assumption: if ge2 {
            AssumptionId::MonotonicityPGe2
        } else {
            AssumptionId::MonotonicityPLt2
        },
        generator: spec.id.clone(),
        samples: cfg.samples,
        max_violation: worst.0,
        worst_point: worst.1,
        pass: worst.0 <= tolerance,
        tolerance,
        seed: cfg.seed,
    })
}

/// Sampled growth envelope `psi_r(t)` on the grid nodes:
/// `sup_{|y| <= r} |f(t,y,z,u) - f0(t)| - Phi(t) (|z| + ||u||)`,
/// clamped at zero, with `Phi` the declared beta (resp. `beta1 + beta2`).
#[derive(Clone, Debug, Serialize)]
pub struct PsiEstimate {
    pub radius: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl PsiEstimate {
    /// Piecewise-constant (left-node) evaluation, clamped to the grid range.
    pub fn as_fn(&self) -> PsiFn {
        let nodes = self.nodes.clone();
        let values = self.values.clone();
        std::sync::Arc::new(move |t: f64| {
            match nodes.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
                Ok(i) => values[i],
                Err(0) => values[0],
                Err(i) => values[(i - 1).min(values.len() - 1)],
            }
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn estimate_psi(
    spec: &GeneratorSpec,
    radius: f64,
    grid: &TimeGrid,
    cfg: &SamplerConfig,
) -> Result<PsiEstimate> {
    let ctx = PathContext::detached();
    let per_node = grid
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(node_idx, &t)| -> Result<f64> {
            let mut worst = 0.0f64;
            let mut f = vec![0.0; spec.dim];
            let mut f0 = vec![0.0; spec.dim];
            spec.zero_driver(t, &ctx, &mut f0);
            for s in 0..cfg.samples as u64 {
                let mut rng =
                    CounterRng::new(cfg.seed, s, node_idx as u64, StreamTag::Sampler);
                let y: Vec<f64> = (0..spec.dim)
                    .map(|_| rng.next_symmetric(radius / (spec.dim as f64).sqrt()))
                    .collect();
                let z: Vec<f64> = (0..spec.z_len())
                    .map(|_| rng.next_symmetric(cfg.z_radius))
                    .collect();
                let u: Vec<f64> = (0..spec.u_len())
                    .map(|_| rng.next_symmetric(cfg.u_radius))
                    .collect();
                spec.eval(t, &y, &z, &u, &ctx, &mut f);
                finite_or_err(&f, &format!("generator '{}' at t={t}, y={y:?}", spec.id))?;
                let diff: Vec<f64> = f.iter().zip(&f0).map(|(a, b)| a - b).collect();
                let phi = spec.coefficients.beta.phi(t);
                let slack = euclidean_norm(&diff)
                    - phi
                        * (euclidean_norm(&z)
                            + lnu_norm_weighted(&u, &spec.atom_intensities, spec.dim));
                worst = worst.max(slack);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(PsiEstimate {
        radius,
        nodes: grid.nodes().to_vec(),
        values: per_node,
    })
}

/// Growth audit: the sampled envelope must be finite at every node.
pub fn check_growth(
    spec: &GeneratorSpec,
    radius: f64,
    grid: &TimeGrid,
    cfg: &SamplerConfig,
) -> Result<(AssumptionReport, PsiEstimate)> {
    if radius <= 0.0 {
        return Err(Error::Validation("growth radius must be positive".into()));
    }
    let psi = estimate_psi(spec, radius, grid, cfg)?;
    let max = psi.max_value();
    let finite = psi.values.iter().all(|v| v.is_finite());
    let worst_node = psi
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, v)| format!("t={:.4} psi={v:.6e}", psi.nodes[i]))
        .unwrap_or_default();
    Ok((
        AssumptionReport {
            assumption: AssumptionId::Growth,
            generator: spec.id.clone(),
            samples: cfg.samples * psi.nodes.len(),
            max_violation: if finite { f64::NEG_INFINITY } else { f64::INFINITY },
            worst_point: format!("max envelope {max:.6e} at {worst_node}"),
            pass: finite,
            tolerance: 0.0,
            seed: cfg.seed,
        },
        psi,
    ))
}

/// Jump-comparison condition (scalar state only): for ordered `u <= u'`,
/// `f(t,y,z,u) - f(t,y,z,u') <= Σ_j λ_j (u'_j - u_j)`.
pub fn check_gamma(
    spec: &GeneratorSpec,
    model: &LevyModel,
    cfg: &SamplerConfig,
    tolerance: f64,
) -> Result<AssumptionReport> {
    if spec.dim != 1 {
        return Err(Error::UnsupportedDimension(format!(
            "jump-comparison check needs d = 1, generator '{}' has d = {}",
            spec.id, spec.dim
        )));
    }
    let lambdas = model.intensities();
    let ctx = PathContext::detached();

    let per_sample = |idx: u64| -> Result<(f64, String)> {
        let mut rng = CounterRng::new(cfg.seed, idx, 1, StreamTag::Sampler);
        let t = cfg.t_floor + rng.next_uniform() * (cfg.horizon - cfg.t_floor);
        let y = [rng.next_symmetric(cfg.y_radius)];
        let z: Vec<f64> = (0..spec.z_len())
            .map(|_| rng.next_symmetric(cfg.z_radius))
            .collect();
        // ordered pair: u' = u + nonnegative increments
        let u: Vec<f64> = (0..spec.u_len())
            .map(|_| rng.next_symmetric(cfg.u_radius))
            .collect();
        let u_prime: Vec<f64> = u
            .iter()
            .map(|&v| v + rng.next_uniform() * cfg.u_radius)
            .collect();
        let mut f = [0.0];
        let mut f_prime = [0.0];
        spec.eval(t, &y, &z, &u, &ctx, &mut f);
        spec.eval(t, &y, &z, &u_prime, &ctx, &mut f_prime);
        finite_or_err(&f, &format!("generator '{}' at t={t}", spec.id))?;
        finite_or_err(&f_prime, &format!("generator '{}' at t={t}", spec.id))?;
        let lhs = f[0] - f_prime[0];
        let rhs: f64 = lambdas
            .iter()
            .zip(u.iter().zip(&u_prime))
            .map(|(&lam, (a, b))| lam * (b - a))
            .sum();
        Ok((
            lhs - rhs,
            format!("t={t:.4} u={u:?} u'={u_prime:?} lhs={lhs:.6e} rhs={rhs:.6e}"),
        ))
    };

    let worst = (0..cfg.samples as u64)
        .into_par_iter()
        .map(per_sample)
        .try_reduce(
            || (f64::NEG_INFINITY, String::new()),
            |a, b| Ok(if b.0 > a.0 { b } else { a }),
        )?;

    Ok(AssumptionReport {
        assumption: AssumptionId::JumpComparison,
        generator: spec.id.clone(),
        samples: cfg.samples,
        max_violation: worst.0,
        worst_point: worst.1,
        pass: worst.0 <= tolerance,
        tolerance,
        seed: cfg.seed,
    })
}

/// Modulus bridge inequalities on a log-spaced grid of `|y|`:
/// `rho(y^2) y^{p-2} <= rho(y^p) + rho(1) y^p` for `p >= 2`, and the mirrored
/// form for `p < 2`.
pub fn check_rho_bounds(
    rho: &RhoFunction,
    p: f64,
    grid_points: usize,
    tolerance: f64,
) -> AssumptionReport {
    assert!(p > 0.0);
    let points = grid_points.max(16);
    let (lo, hi) = (1e-6f64, 1e3f64);
    let step = (hi / lo).ln() / (points - 1) as f64;
    let rho1 = rho.eval(1.0);
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = String::new();
    for i in 0..points {
        let y = lo * (step * i as f64).exp();
        let (lhs, rhs) = if p >= 2.0 {
            (
                rho.eval(y * y) * y.powf(p - 2.0),
                rho.eval(y.powf(p)) + rho1 * y.powf(p),
            )
        } else {
            (
                rho.eval(y.powf(p)) * y.powf(2.0 - p),
                rho.eval(y * y) + rho1 * y * y,
            )
        };
        let v = lhs - rhs;
        if v > max_violation {
            max_violation = v;
            worst = format!("|y|={y:.6e} lhs={lhs:.6e} rhs={rhs:.6e}");
        }
    }
    AssumptionReport {
        assumption: AssumptionId::RhoBounds,
        generator: format!("rho:{}", rho.family_name()),
        samples: points,
        max_violation,
        worst_point: worst,
        pass: max_violation <= tolerance,
        tolerance,
        seed: 0,
    }
}
