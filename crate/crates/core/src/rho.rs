//! Concave moduli used in the monotonicity assumptions.

use serde::{Deserialize, Serialize};

/// A nondecreasing, concave modulus with `rho(0) = 0`.
///
/// Two families are built in:
/// * `Linear(slope)` — `rho(x) = slope * x`, the classical Lipschitz case;
/// * `LogOsgood(knee)` — `rho(x) = x * (1 - ln(x / knee))` for `0 < x <= knee`,
///   continued as the constant `knee` above (the affine continuation with the
///   matching slope, which is zero at the knee).
///
/// Both satisfy the divergence condition `∫_0+ dx / rho(x) = ∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RhoFunction {
    Linear { slope: f64 },
    LogOsgood { knee: f64 },
}

impl RhoFunction {
    pub fn linear(slope: f64) -> Self {
        assert!(slope > 0.0, "slope must be positive");
        RhoFunction::Linear { slope }
    }

    pub fn log_osgood(knee: f64) -> Self {
        assert!(knee > 0.0, "knee must be positive");
        RhoFunction::LogOsgood { knee }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            RhoFunction::Linear { slope } => slope * x,
            RhoFunction::LogOsgood { knee } => {
                if x <= knee {
                    x * (1.0 - (x / knee).ln())
                } else {
                    knee
                }
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            RhoFunction::Linear { .. } => "linear",
            RhoFunction::LogOsgood { .. } => "log_osgood",
        }
    }

    /// Finite-difference audit of the shape requirements on a log-spaced grid:
    /// nondecreasing values and nonincreasing chord slopes (concavity).
    pub fn shape_check(&self, lo: f64, hi: f64, points: usize) -> ShapeCheck {
        assert!(lo > 0.0 && hi > lo && points >= 3);
        let step = (hi / lo).ln() / (points - 1) as f64;
        let xs: Vec<f64> = (0..points).map(|i| lo * (step * i as f64).exp()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();

        let mut nondecreasing = self.eval(0.0) == 0.0;
        let mut concave = true;
        let mut prev_slope = f64::INFINITY;
        for i in 1..points {
            if ys[i] < ys[i - 1] {
                nondecreasing = false;
            }
            let slope = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
            if slope > prev_slope * (1.0 + 1e-12) + 1e-300 {
                concave = false;
            }
            prev_slope = slope;
        }
        ShapeCheck {
            nondecreasing,
            concave,
            zero_at_zero: self.eval(0.0) == 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShapeCheck {
    pub nondecreasing: bool,
    pub concave: bool,
    pub zero_at_zero: bool,
}

impl ShapeCheck {
    pub fn pass(&self) -> bool {
        self.nondecreasing && self.concave && self.zero_at_zero
    }
}
