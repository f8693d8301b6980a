//! Generators with declared assumption coefficients, plus the truncation
//! constructions used by the existence machinery.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::LevyModel;
use crate::rho::RhoFunction;

/// Per-path information available to a generator evaluation. Checkers use
/// [`PathContext::detached`] (path 0, zero state).
#[derive(Clone, Copy, Debug)]
pub struct PathContext<'a> {
    pub path: usize,
    pub state: &'a [f64],
}

impl<'a> PathContext<'a> {
    pub fn detached() -> PathContext<'static> {
        PathContext { path: 0, state: &[] }
    }
}

/// `f(t, y, z, u, ctx) -> R^d`, written into `out` (length d).
/// `z` is the d x k matrix row-major, `u` the per-atom field (atoms x d).
pub type EvalFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &PathContext, &mut [f64]) + Send + Sync>;

/// `f0(t, ctx) = f(t, 0, 0, 0)` as a standalone process.
pub type ZeroDriverFn = Arc<dyn Fn(f64, &PathContext, &mut [f64]) + Send + Sync>;

/// Deterministic coefficient process `t -> value`.
pub type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant_coef(value: f64) -> CoefFn {
    Arc::new(move |_| value)
}

/// Declared z/u Lipschitz coefficients: one process for `p >= 2`, a split
/// pair with integrability exponent `q` for `p < 2`.
#[derive(Clone)]
pub enum BetaDecl {
    Joint(CoefFn),
    Split { beta1: CoefFn, beta2: CoefFn, q: f64 },
}

impl BetaDecl {
    /// Combined coefficient used as the growth bound Phi.
    pub fn phi(&self, t: f64) -> f64 {
        match self {
            BetaDecl::Joint(beta) => beta(t),
            BetaDecl::Split { beta1, beta2, .. } => beta1(t) + beta2(t),
        }
    }
}

/// Declared assumption coefficients of a generator.
#[derive(Clone)]
pub struct CoefficientDecl {
    pub alpha: CoefFn,
    pub mu: CoefFn,
    pub beta: BetaDecl,
    pub rho: RhoFunction,
}

impl CoefficientDecl {
    pub fn zero() -> Self {
        CoefficientDecl {
            alpha: constant_coef(0.0),
            mu: constant_coef(0.0),
            beta: BetaDecl::Joint(constant_coef(0.0)),
            rho: RhoFunction::linear(1.0),
        }
    }
}

/// A generator `f` with its declared coefficients and dimensions.
///
/// `eval` must be pure and re-entrant; specs are immutable and cheap to
/// clone (the closures are shared).
#[derive(Clone)]
pub struct GeneratorSpec {
    pub id: String,
    /// Solution exponent p > 1 declared for the assumption branch.
    pub p: f64,
    pub dim: usize,
    pub brownian_dim: usize,
    /// Jump intensities of the model the spec was built against; these
    /// weights define the L2(nu) norm of the `u` argument.
    pub atom_intensities: Vec<f64>,
    /// False when `f` ignores `y`; the backward step is then explicit.
    pub depends_on_y: bool,
    pub coefficients: CoefficientDecl,
    eval: EvalFn,
    zero_driver: ZeroDriverFn,
}

impl GeneratorSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        p: f64,
        model: &LevyModel,
        depends_on_y: bool,
        coefficients: CoefficientDecl,
        eval: EvalFn,
        zero_driver: ZeroDriverFn,
    ) -> Self {
        assert!(p > 1.0, "solution exponent must exceed 1");
        GeneratorSpec {
            id: id.into(),
            p,
            dim: model.dim,
            brownian_dim: model.brownian_dim,
            atom_intensities: model.intensities(),
            depends_on_y,
            coefficients,
            eval,
            zero_driver,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atom_intensities.len()
    }

    pub fn z_len(&self) -> usize {
        self.dim * self.brownian_dim
    }

    pub fn u_len(&self) -> usize {
        self.atom_count() * self.dim
    }

    #[inline]
    pub fn eval(
        &self,
        t: f64,
        y: &[f64],
        z: &[f64],
        u: &[f64],
        ctx: &PathContext,
        out: &mut [f64],
    ) {
        (self.eval)(t, y, z, u, ctx, out);
    }

    #[inline]
    pub fn zero_driver(&self, t: f64, ctx: &PathContext, out: &mut [f64]) {
        (self.zero_driver)(t, ctx, out);
    }

    /// `|f0(t)|` for the detached context, used by norm estimates.
    pub fn zero_driver_norm(&self, t: f64) -> f64 {
        let mut buf = vec![0.0; self.dim];
        self.zero_driver(t, &PathContext::detached(), &mut buf);
        buf.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// L2(nu) norm of a `u` argument under this spec's intensities.
    pub fn lnu_norm_of(&self, u: &[f64]) -> f64 {
        lnu_norm_weighted(u, &self.atom_intensities, self.dim)
    }

    /// Check `eval(t, 0, 0, 0) == f0(t)` on the sampled times.
    pub fn check_zero_consistency(&self, times: &[f64]) -> Result<()> {
        let y = vec![0.0; self.dim];
        let z = vec![0.0; self.z_len()];
        let u = vec![0.0; self.u_len()];
        let ctx = PathContext::detached();
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        for &t in times {
            self.eval(t, &y, &z, &u, &ctx, &mut a);
            self.zero_driver(t, &ctx, &mut b);
            if a != b {
                return Err(Error::Validation(format!(
                    "generator '{}': eval(t,0,0,0) != f0(t) at t = {t} ({a:?} vs {b:?})",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// New spec with `f` and `f0` shifted by the constant vector `c`.
    /// Declared coefficients are unchanged (the shift only moves `f0`).
    pub fn with_constant_shift(&self, shift: Vec<f64>) -> GeneratorSpec {
        assert_eq!(shift.len(), self.dim);
        let inner_eval = self.eval.clone();
        let inner_zero = self.zero_driver.clone();
        let s_eval = shift.clone();
        let s_zero = shift;
        GeneratorSpec {
            id: format!("{}+shift", self.id),
            eval: Arc::new(move |t, y, z, u, ctx, out| {
                inner_eval(t, y, z, u, ctx, out);
                for (o, s) in out.iter_mut().zip(&s_eval) {
                    *o += s;
                }
            }),
            zero_driver: Arc::new(move |t, ctx, out| {
                inner_zero(t, ctx, out);
                for (o, s) in out.iter_mut().zip(&s_zero) {
                    *o += s;
                }
            }),
            ..self.clone()
        }
    }

    /// New spec with the data scaled: `f_eps = (f - f0) + eps * f0`.
    /// Together with `eps * xi` this scales the BSDE data.
    pub fn with_scaled_zero_driver(&self, eps: f64) -> GeneratorSpec {
        let inner_eval = self.eval.clone();
        let inner_zero = self.zero_driver.clone();
        let zero_for_eval = self.zero_driver.clone();
        let dim = self.dim;
        GeneratorSpec {
            id: format!("{}*eps={eps}", self.id),
            eval: Arc::new(move |t, y, z, u, ctx, out| {
                inner_eval(t, y, z, u, ctx, out);
                let mut f0 = vec![0.0; dim];
                zero_for_eval(t, ctx, &mut f0);
                for (o, v) in out.iter_mut().zip(&f0) {
                    *o += (eps - 1.0) * v;
                }
            }),
            zero_driver: Arc::new(move |t, ctx, out| {
                inner_zero(t, ctx, out);
                for o in out.iter_mut() {
                    *o *= eps;
                }
            }),
            ..self.clone()
        }
    }
}

/// The L2(nu) norm of a per-atom field: `sqrt(Σ_j λ_j |u_j|^2)` where each
/// `u_j` lives in R^d (`u` is atom-major).
pub fn lnu_norm(u: &[f64], model: &LevyModel) -> Result<f64> {
    if u.len() != model.atoms.len() * model.dim {
        return Err(Error::Validation(format!(
            "u has {} entries, expected {} atoms x dim {}",
            u.len(),
            model.atoms.len(),
            model.dim
        )));
    }
    let weights = model.intensities();
    Ok(lnu_norm_weighted(u, &weights, model.dim))
}

#[inline]
pub(crate) fn lnu_norm_weighted(u: &[f64], intensities: &[f64], dim: usize) -> f64 {
    let mut acc = 0.0;
    for (j, &lambda) in intensities.iter().enumerate() {
        let uj = &u[j * dim..(j + 1) * dim];
        acc += lambda * uj.iter().map(|v| v * v).sum::<f64>();
    }
    acc.sqrt()
}

#[inline]
pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smooth cutoff in the state radius: 1 on `|y| <= r`, 0 on `|y| >= r + 1`,
/// bridged by the quintic smoothstep `s(w) = 1 - w^3 (10 - 15 w + 6 w^2)`.
/// Lipschitz in `|y|` with constant 15/8.
pub fn ball_cutoff(y: &[f64], radius: f64) -> f64 {
    assert!(radius > 0.0);
    let norm = euclidean_norm(y);
    if norm <= radius {
        1.0
    } else if norm >= radius + 1.0 {
        0.0
    } else {
        let w = norm - radius;
        1.0 - w * w * w * (10.0 - 15.0 * w + 6.0 * w * w)
    }
}

// a few ulps of slack keep the projection exactly idempotent: the rescaled
// norm can land a rounding error above the radius
const BALL_SLACK: f64 = 4.0 * f64::EPSILON;

/// Radial projection onto the closed ball of the given radius:
/// `v -> radius * v / (|v| ∨ radius)`. Identity (bitwise) inside the ball.
pub fn project_to_ball(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0);
    let norm = euclidean_norm(v);
    if norm <= radius * (1.0 + BALL_SLACK) {
        v.to_vec()
    } else {
        let scale = radius / norm;
        v.iter().map(|x| x * scale).collect()
    }
}

/// Radial projection in the L2(nu) norm for per-atom fields.
pub fn project_to_ball_lnu(u: &[f64], radius: f64, intensities: &[f64], dim: usize) -> Vec<f64> {
    assert!(radius > 0.0);
    let norm = lnu_norm_weighted(u, intensities, dim);
    if norm <= radius * (1.0 + BALL_SLACK) {
        u.to_vec()
    } else {
        let scale = radius / norm;
        u.iter().map(|x| x * scale).collect()
    }
}

/// Clip terminal samples path by path onto the ball of radius `level`
/// (Euclidean in R^d). `values` is path-major with `dim` entries per path.
pub fn truncate_terminal(values: &[f64], dim: usize, level: f64) -> Vec<f64> {
    assert!(level > 0.0 && dim > 0 && values.len().is_multiple_of(dim));
    let mut out = Vec::with_capacity(values.len());
    for chunk in values.chunks(dim) {
        out.extend_from_slice(&project_to_ball(chunk, level));
    }
    out
}

/// A growth envelope `t -> psi(t)`, either analytic or a sampled estimate.
pub type PsiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant_psi(value: f64) -> PsiFn {
    Arc::new(move |_| value)
}

fn truncated_eval(
    spec: &GeneratorSpec,
    radius: Option<f64>,
    level: f64,
    psi: PsiFn,
) -> EvalFn {
    let inner = spec.eval.clone();
    let zero = spec.zero_driver.clone();
    let intensities = spec.atom_intensities.clone();
    let dim = spec.dim;
    Arc::new(move |t, y, z, u, ctx, out| {
        let cutoff = match radius {
            Some(r) => ball_cutoff(y, r),
            None => 1.0,
        };
        let zc = project_to_ball(z, level);
        let uc = project_to_ball_lnu(u, level, &intensities, dim);
        let damping = level / psi(t).max(level);
        if cutoff == 1.0 && damping == 1.0 {
            // all truncations inactive: reuse the original arithmetic path
            inner(t, y, &zc, &uc, ctx, out);
            return;
        }
        let mut f0 = vec![0.0; dim];
        zero(t, ctx, &mut f0);
        if cutoff == 0.0 {
            out.copy_from_slice(&f0);
            return;
        }
        inner(t, y, &zc, &uc, ctx, out);
        for (o, v) in out.iter_mut().zip(&f0) {
            *o = cutoff * (*o - v) * damping + v;
        }
    })
}

/// The level-`n` truncation of a generator:
/// `f_n(t,y,z,u) = (f(t, y, c_n(z), c_n(u)) - f0(t)) * n / (psi(t) ∨ n) + f0(t)`,
/// where `c_n` projects onto the radius-`n` balls. `psi` should be the growth
/// envelope at radius `r + 1` (estimated or analytic). When every truncation
/// is inactive the evaluation is bit-identical to the original generator.
pub fn truncate_generator(spec: &GeneratorSpec, level: u32, psi: PsiFn) -> GeneratorSpec {
    assert!(level >= 1);
    GeneratorSpec {
        id: format!("{}|fn(n={level})", spec.id),
        eval: truncated_eval(spec, None, f64::from(level), psi),
        ..spec.clone()
    }
}

/// As [`truncate_generator`] with the additional smooth state cutoff at
/// `radius`: the `h_n` construction. Far outside the ball the generator
/// collapses to `f0`.
pub fn truncate_generator_with_cutoff(
    spec: &GeneratorSpec,
    radius: f64,
    level: u32,
    psi: PsiFn,
) -> GeneratorSpec {
    assert!(level >= 1 && radius > 0.0);
    GeneratorSpec {
        id: format!("{}|hn(r={radius},n={level})", spec.id),
        eval: truncated_eval(spec, Some(radius), f64::from(level), psi),
        ..spec.clone()
    }
}
