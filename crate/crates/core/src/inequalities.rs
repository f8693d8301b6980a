//! Numerical integral inequalities: the backward nonlinear Gronwall bound
//! built from a concave modulus, its linear special case, the weighted
//! product bound, and the divergence test for the modulus reciprocal.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rho::RhoFunction;

const QUAD_REL_TOL: f64 = 1e-10;
const QUAD_ABS_TOL: f64 = 1e-14;

/// Adaptive Simpson quadrature with the module's default tolerances.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fl = f(lo);
    let fm = f(0.5 * (lo + hi));
    let fh = f(hi);
    let whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fh);
    let value = simpson(f, lo, hi, fl, fm, fh, whole, 60)?;
    Ok(sign * value)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::Numeric(format!(
            "quadrature hit a non-finite integrand on [{a}, {b}]"
        )));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "quadrature did not converge on [{a}, {b}] (delta {delta:.3e})"
        )));
    }
    if delta.abs() <= 15.0 * (QUAD_ABS_TOL + QUAD_REL_TOL * (left + right).abs()) {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson(f, a, m, fa, flm, fm, left, depth - 1)?
        + simpson(f, m, b, fm, frm, fb, right, depth - 1)?)
}

/// `G(x) = ∫_1^x dr / rho(r)`, negative below the anchor. Computed in log
/// space (`r = e^s`) so that arguments across hundreds of decades stay
/// resolvable.
pub fn modulus_integral(rho: &RhoFunction, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Numeric("modulus integral needs x > 0".into()));
    }
    integrate(&|s: f64| {
        let r = s.exp();
        r / rho.eval(r)
    }, 0.0, x.ln())
}

/// Inverse of `G` by bisection on the exponent over `[1e-300, 1e300]`;
/// `G` is strictly increasing for a positive modulus.
pub fn modulus_integral_inverse(rho: &RhoFunction, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-300.0 * std::f64::consts::LN_10, 300.0 * std::f64::consts::LN_10);
    let g_lo = modulus_integral(rho, lo.exp())?;
    let g_hi = modulus_integral(rho, hi.exp())?;
    if target < g_lo {
        return Ok(0.0);
    }
    if target > g_hi {
        return Err(Error::Numeric(format!(
            "inverse target {target:.3e} above the representable range of G"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if modulus_integral(rho, mid.exp())? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Backward nonlinear Gronwall bound on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct BihariBound {
    pub c: f64,
    pub rho: RhoFunction,
    pub nodes: Vec<f64>,
    pub bound: Vec<f64>,
    /// False where `G(c) + ∫_t^T K` leaves the range of `G`; the bound is
    /// reported as infinity there rather than extrapolated.
    pub in_domain: Vec<bool>,
}

impl BihariBound {
    pub fn at(&self, i: usize) -> f64 {
        self.bound[i]
    }
}

/// Evaluate `t -> G^{-1}(G(c) + ∫_t^T K ds)` on the grid nodes, with `K`
/// sampled at the nodes and integrated by the trapezoid rule.
///
/// For `c = 0` with a divergence-checked modulus the bound is identically
/// zero.
pub fn bihari_bound(
    c: f64,
    k_values: &[f64],
    rho: &RhoFunction,
    nodes: &[f64],
) -> Result<BihariBound> {
    if c < 0.0 {
        return Err(Error::Validation("bihari constant must be >= 0".into()));
    }
    if k_values.len() != nodes.len() {
        return Err(Error::Validation(format!(
            "K sampled at {} points but the grid has {} nodes",
            k_values.len(),
            nodes.len()
        )));
    }
    if k_values.iter().any(|&k| k < 0.0 || !k.is_finite()) {
        return Err(Error::Validation("K must be non-negative and finite".into()));
    }

    let n = nodes.len();
    // tail integrals ∫_{t_i}^T K by backward trapezoid accumulation
    let mut tail = vec![0.0f64; n];
    for i in (0..n - 1).rev() {
        let dt = nodes[i + 1] - nodes[i];
        tail[i] = tail[i + 1] + 0.5 * dt * (k_values[i] + k_values[i + 1]);
    }

    if c == 0.0 {
        let diverging = osgood_divergence(rho, 1.0, 6)?.diverging;
        if diverging {
            return Ok(BihariBound {
                c,
                rho: *rho,
                nodes: nodes.to_vec(),
                bound: vec![0.0; n],
                in_domain: vec![true; n],
            });
        }
        return Err(Error::Numeric(
            "c = 0 needs a divergence-checked modulus for the zero bound".into(),
        ));
    }

    let g_c = modulus_integral(rho, c)?;
    let g_sup = modulus_integral(rho, 1e300)?;
    let mut bound = Vec::with_capacity(n);
    let mut in_domain = Vec::with_capacity(n);
    for &tail_i in &tail {
        let arg = g_c + tail_i;
        if arg > g_sup {
            bound.push(f64::INFINITY);
            in_domain.push(false);
        } else {
            bound.push(modulus_integral_inverse(rho, arg)?);
            in_domain.push(true);
        }
    }
    Ok(BihariBound {
        c,
        rho: *rho,
        nodes: nodes.to_vec(),
        bound,
        in_domain,
    })
}

/// The linear special case in closed form: `t -> c exp(∫_t^T K ds)`.
pub fn gronwall_bound(c: f64, k_values: &[f64], nodes: &[f64]) -> Result<Vec<f64>> {
    if c < 0.0 {
        return Err(Error::Validation("gronwall constant must be >= 0".into()));
    }
    if k_values.len() != nodes.len() {
        return Err(Error::Validation("K/grid length mismatch".into()));
    }
    let n = nodes.len();
    let mut tail = vec![0.0f64; n];
    for i in (0..n - 1).rev() {
        let dt = nodes[i + 1] - nodes[i];
        tail[i] = tail[i + 1] + 0.5 * dt * (k_values[i] + k_values[i + 1]);
    }
    Ok(tail.iter().map(|&s| c * s.exp()).collect())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct YoungBound {
    pub product: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Weighted product bound `a b <= a^p / (p R) + b^q R^{q/p} / q`, for a
/// conjugate pair `1/p + 1/q = 1` (validated to 1e-12) and `R > 0`.
pub fn young_bound(a: f64, b: f64, p: f64, q: f64, r: f64) -> Result<YoungBound> {
    if a < 0.0 || b < 0.0 {
        return Err(Error::Validation("factors must be non-negative".into()));
    }
    if !(p > 1.0 && q > 1.0) || (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "exponents must be conjugate: 1/{p} + 1/{q} != 1"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::Validation("weight R must be positive".into()));
    }
    let product = a * b;
    // evaluate the power terms in log space: extreme conjugate exponents
    // overflow/underflow the direct powf route into inf * 0
    let term_a = if a == 0.0 {
        0.0
    } else {
        (p * a.ln() - (p * r).ln()).exp()
    };
    let term_b = if b == 0.0 {
        0.0
    } else {
        (q * b.ln() + (q / p) * r.ln() - q.ln()).exp()
    };
    let bound = term_a + term_b;
    Ok(YoungBound {
        product,
        bound,
        holds: product <= bound,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OsgoodReport {
    pub eps0: f64,
    /// `∫_{eps0 10^{-m}}^{eps0} dx / rho(x)` for `m = 1..=decades`.
    pub partial_integrals: Vec<f64>,
    pub diverging: bool,
}

/// Divergence probe for `∫_0+ dx / rho(x)`: the partial integrals must keep
/// growing without geometric decay of the increments. Geometric decay (as for
/// `rho(x) = sqrt(x)`) signals a convergent integral.
pub fn osgood_divergence(rho: &RhoFunction, eps0: f64, decades: usize) -> Result<OsgoodReport> {
    if !(eps0 > 0.0) {
        return Err(Error::Validation("eps0 must be positive".into()));
    }
    if decades < 3 {
        return Err(Error::Validation("need at least 3 decades".into()));
    }
    let mut partials = Vec::with_capacity(decades);
    let mut acc = 0.0;
    let mut upper = eps0;
    for _ in 1..=decades {
        let lower = upper / 10.0;
        acc += integrate(&|x| 1.0 / rho.eval(x), lower, upper)?;
        partials.push(acc);
        upper = lower;
    }
    let mut diverging = partials[0] > 0.0;
    let mut prev_increment = partials[0];
    for m in 1..partials.len() {
        let increment = partials[m] - partials[m - 1];
        if increment <= 0.0 || increment < 0.4 * prev_increment {
            diverging = false;
        }
        prev_increment = increment;
    }
    Ok(OsgoodReport {
        eps0,
        partial_integrals: partials,
        diverging,
    })
}
