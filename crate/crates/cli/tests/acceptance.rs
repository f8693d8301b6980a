//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Statistical criteria run on fixed seeds; every tolerance is pinned
//! in the assertions.

use std::fs;
use std::process::Command;

use levy_bsde::analysis::{
    stability_sweep, truncation_convergence_study, uniform_integrability_check,
};
use levy_bsde::checks::{check_gamma, check_monotonicity, check_rho_bounds, SamplerConfig};
use levy_bsde::comparison::{ComparisonExperiment, ComparisonTolerance};
use levy_bsde::inequalities::{bihari_bound, gronwall_bound};
use levy_bsde::registry::{self, Overrides};
use levy_bsde::rng::{CounterRng, StreamTag};
use levy_bsde::solver::solve_bsde;
use levy_bsde::{
    simulate_forward, JumpAtom, LevyModel, RhoFunction, SchemeConfig, TimeGrid,
};

fn verdict_line(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn jump_model() -> LevyModel {
    LevyModel {
        dim: 1,
        brownian_dim: 1,
        drift: vec![0.0],
        diffusion: vec![1.0],
        atoms: vec![
            JumpAtom {
                mark: vec![0.6],
                intensity: 1.0,
            },
            JumpAtom {
                mark: vec![-0.3],
                intensity: 2.0,
            },
        ],
    }
}

// -------------------------------------------------------------------------
// 1. martingale oracle
// -------------------------------------------------------------------------

#[test]
fn criterion_1_martingale_oracle() {
    let model = LevyModel::standard_brownian();
    let grid = TimeGrid::uniform(1.0, 50);
    let m = 10_000;
    let ensemble = simulate_forward(&model, &grid, m, 20_240_501).unwrap();
    let spec = registry::build_generator("zero", &model, &grid, &Overrides::new()).unwrap();
    let terminal = registry::build_terminal("state", &Overrides::new()).unwrap();
    let config = SchemeConfig {
        basis_degree: 1,
        ..SchemeConfig::default()
    };
    let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();

    // the fit preserves means: mean(Y_i - W_i) = mean(W_T - W_i), whose
    // standard error is sd(W_T - W_i)/sqrt(M)
    let mut worst_ratio: f64 = 0.0;
    for i in 0..=grid.steps() {
        let mut mean_diff = 0.0;
        let mut raw = Vec::with_capacity(m);
        for path in 0..m {
            mean_diff += sol.y_at(path, i)[0] - ensemble.state_at(path, i)[0];
            raw.push(ensemble.terminal_state(path)[0] - ensemble.state_at(path, i)[0]);
        }
        mean_diff /= m as f64;
        let raw_mean = raw.iter().sum::<f64>() / m as f64;
        let var =
            raw.iter().map(|v| (v - raw_mean) * (v - raw_mean)).sum::<f64>() / (m as f64 - 1.0);
        let se = (var / m as f64).sqrt();
        if se > 0.0 {
            worst_ratio = worst_ratio.max(mean_diff.abs() / (3.0 * se));
        } else {
            worst_ratio = worst_ratio.max(if mean_diff == 0.0 { 0.0 } else { f64::INFINITY });
        }
    }
    let mean_bias_ok = worst_ratio <= 1.0;

    let mut z_mean = 0.0;
    for path in 0..m {
        for i in 0..grid.steps() {
            z_mean += sol.z_at(path, i)[0];
        }
    }
    z_mean /= (m * grid.steps()) as f64;
    let z_ok = (z_mean - 1.0).abs() <= 0.05;

    let pass = mean_bias_ok && z_ok;
    verdict_line(
        "criterion 1 (martingale oracle)",
        pass,
        &format!("max |mean dY|/(3 SE) = {worst_ratio:.3}, mean Z = {z_mean:.4}"),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 2. deterministic ODE oracles
// -------------------------------------------------------------------------

fn rk4_reversed_time(f: impl Fn(f64) -> f64, xi: f64, steps: usize) -> f64 {
    let dt = 1.0 / steps as f64;
    let mut y = xi;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[test]
fn criterion_2_ode_oracles() {
    let model = LevyModel::deterministic(1, vec![0.0]);
    let grid = TimeGrid::uniform(1.0, 1000);
    let ensemble = simulate_forward(&model, &grid, 1, 0).unwrap();
    let config = SchemeConfig {
        basis_degree: 0,
        ..SchemeConfig::default()
    };

    // f(y) = -y, xi = 1: closed form e^{-1}, cross-checked by RK4
    let expected_lin = (-1.0f64).exp();
    assert!((rk4_reversed_time(|y| -y, 1.0, 20_000) - expected_lin).abs() < 1e-12);
    let spec = registry::build_generator("linear_drift", &model, &grid, &Overrides::new()).unwrap();
    let terminal = registry::build_terminal("constant", &Overrides::new()).unwrap();
    let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
    let err_lin = (sol.y_at(0, 0)[0] - expected_lin).abs();

    // f(y) = -y ln y, xi = e: closed form exp(e^{-1}), cross-checked by RK4
    let expected_log = ((-1.0f64).exp()).exp();
    assert!(
        (rk4_reversed_time(|y: f64| -y * y.ln(), std::f64::consts::E, 20_000) - expected_log)
            .abs()
            < 1e-10
    );
    let spec = registry::build_generator("ylogy_osgood", &model, &grid, &Overrides::new()).unwrap();
    let mut over = Overrides::new();
    over.insert("value".into(), std::f64::consts::E);
    let terminal = registry::build_terminal("constant", &over).unwrap();
    let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config).unwrap();
    let err_log = (sol.y_at(0, 0)[0] - expected_log).abs();

    let pass = err_lin <= 1e-3 && err_log <= 1e-3;
    verdict_line(
        "criterion 2 (ODE oracles)",
        pass,
        &format!("|Y0 - e^-1| = {err_lin:.2e}, |Y0 - exp(e^-1)| = {err_log:.2e}"),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 3. comparison fixtures
// -------------------------------------------------------------------------

#[test]
fn criterion_3_comparison_theorem() {
    let model = jump_model();
    let grid = TimeGrid::uniform(1.0, 20);
    let scheme = SchemeConfig::default();
    let sampler = SamplerConfig {
        samples: 10_000,
        ..SamplerConfig::default()
    };

    // fixture a: generator shifted up by 1, same terminal
    let spec =
        registry::build_generator("ylogy_osgood", &model, &grid, &Overrides::new()).unwrap();
    let mut shift = Overrides::new();
    shift.insert("f0_shift".into(), 1.0);
    let spec_up = registry::build_generator("ylogy_osgood", &model, &grid, &shift).unwrap();
    let terminal = registry::build_terminal("state_abs", &Overrides::new()).unwrap();
    let fixture_a = ComparisonExperiment {
        spec: &spec,
        spec_prime: &spec_up,
        terminal: &terminal,
        terminal_prime: &terminal,
        model: &model,
        grid: &grid,
        paths: 4_000,
        seed: 31_415,
        scheme: &scheme,
        tolerance: ComparisonTolerance::RegressionSe { multiplier: 3.0 },
        preflight_sampler: sampler.clone(),
        posthoc_generator_check: true,
    }
    .run()
    .unwrap();

    // fixture b: identical data passes at tolerance zero
    let fixture_b = ComparisonExperiment {
        spec: &spec,
        spec_prime: &spec,
        terminal: &terminal,
        terminal_prime: &terminal,
        model: &model,
        grid: &grid,
        paths: 4_000,
        seed: 31_415,
        scheme: &scheme,
        tolerance: ComparisonTolerance::Absolute { value: 0.0 },
        preflight_sampler: sampler.clone(),
        posthoc_generator_check: false,
    }
    .run()
    .unwrap();

    // fixture c: Osgood pair f' = f + 1/2 with terminal |W_T|
    let mut half = Overrides::new();
    half.insert("f0_shift".into(), 0.5);
    let spec_half = registry::build_generator("ylogy_osgood", &model, &grid, &half).unwrap();
    let fixture_c = ComparisonExperiment {
        spec: &spec,
        spec_prime: &spec_half,
        terminal: &terminal,
        terminal_prime: &terminal,
        model: &model,
        grid: &grid,
        paths: 4_000,
        seed: 27_182,
        scheme: &scheme,
        tolerance: ComparisonTolerance::RegressionSe { multiplier: 3.0 },
        preflight_sampler: sampler,
        posthoc_generator_check: false,
    }
    .run()
    .unwrap();

    let pass = fixture_a.pass
        && fixture_a.posthoc_generator_violations == Some(0)
        && fixture_b.pass
        && fixture_b.tolerance == 0.0
        && fixture_c.pass;
    verdict_line(
        "criterion 3 (comparison theorem)",
        pass,
        &format!(
            "violations: shift={} identical={} osgood={}",
            fixture_a.violations, fixture_b.violations, fixture_c.violations
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 4. stability sweep
// -------------------------------------------------------------------------

#[test]
fn criterion_4_stability_sweep() {
    let model = jump_model();
    let grid = TimeGrid::uniform(1.0, 20);
    let ensemble = simulate_forward(&model, &grid, 3_000, 60_601).unwrap();
    let spec =
        registry::build_generator("ylogy_osgood", &model, &grid, &Overrides::new()).unwrap();
    let terminal = registry::build_terminal("state_abs", &Overrides::new()).unwrap();
    let report = stability_sweep(
        &spec,
        &terminal,
        &ensemble,
        &grid,
        &SchemeConfig::default(),
        &[1.0, 0.5, 0.25, 0.1, 0.0],
    )
    .unwrap();
    let pass = report.pass && report.zero_row_exact == Some(true);
    let columns: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("eps={}: sp={:.4}", r.scale, r.norms.sp))
        .collect();
    verdict_line(
        "criterion 4 (stability sweep)",
        pass,
        &columns.join(", "),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 5. truncation convergence
// -------------------------------------------------------------------------

#[test]
fn criterion_5_truncation_convergence() {
    let model = jump_model();
    let grid = TimeGrid::uniform(1.0, 16);
    let ensemble = simulate_forward(&model, &grid, 2_000, 777).unwrap();
    let spec =
        registry::build_generator("ylogy_osgood", &model, &grid, &Overrides::new()).unwrap();
    let terminal = registry::build_terminal("state", &Overrides::new()).unwrap();
    let report = truncation_convergence_study(
        &spec,
        &terminal,
        &ensemble,
        &grid,
        &SchemeConfig::default(),
        &[1, 2, 4, 8, 64],
        3.0,
        &SamplerConfig {
            samples: 2_000,
            ..SamplerConfig::default()
        },
    )
    .unwrap();
    let pass = report.pass
        && report.distances_nonincreasing
        && report.inactive_level_exact_zero == Some(true);
    let distances: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "n={}: {:.4}",
                r.level
                    .map(|l| l.to_string())
                    .unwrap_or_else(|| "inf".into()),
                r.sp_distance
            )
        })
        .collect();
    verdict_line(
        "criterion 5 (truncation convergence)",
        pass,
        &distances.join(", "),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 6. integral inequalities
// -------------------------------------------------------------------------

#[test]
fn criterion_6_bihari_gronwall() {
    // linear modulus, c = 1, K = 1, T = 1: bound(0) = e within 1e-6
    let nodes: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let ones = vec![1.0; nodes.len()];
    let rho = RhoFunction::linear(1.0);
    let bound = bihari_bound(1.0, &ones, &rho, &nodes).unwrap();
    let e_err = (bound.bound[0] - std::f64::consts::E).abs();

    // 20 random (c, K) fixtures: numeric route vs the closed form, 1e-9
    let mut rng = CounterRng::new(0xB1AA, 0, 0, StreamTag::Sampler);
    let mut max_gap: f64 = 0.0;
    for _ in 0..20 {
        let c = 0.1 + 4.9 * rng.next_uniform();
        let k: Vec<f64> = nodes.iter().map(|_| 2.0 * rng.next_uniform()).collect();
        let numeric = bihari_bound(c, &k, &rho, &nodes).unwrap();
        let closed = gronwall_bound(c, &k, &nodes).unwrap();
        for (a, b) in numeric.bound.iter().zip(&closed) {
            max_gap = max_gap.max((a - b).abs());
        }
    }

    // equality-case domination: the backward iterate of
    // z(t) = c + ∫_t^T K rho(y) must sit below the bound at every node
    let mut domination_ok = true;
    let mut worst_defect: f64 = 0.0;
    for rho in [RhoFunction::linear(1.0), RhoFunction::log_osgood(1.0)] {
        let n = 400;
        let fine: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let k = vec![0.8; fine.len()];
        let c = 0.37;
        let mut y = vec![0.0; fine.len()];
        y[n] = c;
        for i in (0..n).rev() {
            let dt = fine[i + 1] - fine[i];
            y[i] = y[i + 1] + dt * k[i + 1] * rho.eval(y[i + 1]);
        }
        let bound = bihari_bound(c, &k, &rho, &fine).unwrap();
        for i in 0..=n {
            let defect = y[i] - bound.bound[i];
            worst_defect = worst_defect.max(defect);
            if defect > 1e-8 {
                domination_ok = false;
            }
        }
    }

    let pass = e_err <= 1e-6 && max_gap <= 1e-9 && domination_ok;
    verdict_line(
        "criterion 6 (integral inequalities)",
        pass,
        &format!(
            "|bound(0) - e| = {e_err:.2e}, max closed-form gap = {max_gap:.2e}, \
             worst domination defect = {worst_defect:.2e}"
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 7. assumption suite
// -------------------------------------------------------------------------

#[test]
fn criterion_7_assumption_suite() {
    let model = jump_model();
    let grid = TimeGrid::uniform(1.0, 10);
    let sampler = SamplerConfig {
        samples: 100_000,
        ..SamplerConfig::default()
    };

    let mut positive_ok = true;
    for id in ["zero", "linear_drift", "ylogy_osgood"] {
        let spec = registry::build_generator(id, &model, &grid, &Overrides::new()).unwrap();
        let report = check_monotonicity(&spec, &sampler, 1e-9).unwrap();
        positive_ok &= report.pass;
    }
    let negative = registry::build_generator("quadratic_negative", &model, &grid, &Overrides::new())
        .unwrap();
    let negative_fails = !check_monotonicity(&negative, &sampler, 1e-9).unwrap().pass;

    let mut rho_ok = true;
    for rho in [RhoFunction::linear(1.0), RhoFunction::log_osgood(1.0)] {
        for p in [1.5, 2.0, 3.0] {
            rho_ok &= check_rho_bounds(&rho, p, 4000, 1e-9).pass;
        }
    }

    let gamma_pos = ["zero", "linear_drift", "jump_linear"].iter().all(|id| {
        let spec = registry::build_generator(id, &model, &grid, &Overrides::new()).unwrap();
        check_gamma(&spec, &model, &sampler, 1e-9).unwrap().pass
    });
    let gamma_neg = {
        let spec =
            registry::build_generator("jump_gamma_violating", &model, &grid, &Overrides::new())
                .unwrap();
        !check_gamma(&spec, &model, &sampler, 1e-9).unwrap().pass
    };

    let pass = positive_ok && negative_fails && rho_ok && gamma_pos && gamma_neg;
    verdict_line(
        "criterion 7 (assumption suite)",
        pass,
        &format!(
            "monotone positives={positive_ok} negative-fails={negative_fails} \
             rho-bounds={rho_ok} gamma=({gamma_pos}, {gamma_neg})"
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 8. uniform integrability decay
// -------------------------------------------------------------------------

#[test]
fn criterion_8_uniform_integrability() {
    // V_n = W_T / n on a simulated terminal sample; both E|V_n|^2 and
    // E[rho(V_n^2)] must fall below 1e-3 of their initial values by n = 64
    let model = LevyModel::standard_brownian();
    let grid = TimeGrid::uniform(1.0, 16);
    let m = 100_000;
    let ensemble = simulate_forward(&model, &grid, m, 8_088).unwrap();
    let xi: Vec<f64> = (0..m).map(|p| ensemble.terminal_state(p)[0]).collect();

    let mut pass = true;
    let mut details = Vec::new();
    for rho in [RhoFunction::linear(1.0), RhoFunction::log_osgood(1.0)] {
        let report = uniform_integrability_check(&rho, 2.0, &xi, 6, 1e-3).unwrap();
        let moment_ratio = report.moment_sequence.last().unwrap() / report.moment_sequence[0];
        let rho_ratio = report.rho_sequence.last().unwrap() / report.rho_sequence[0];
        details.push(format!(
            "{}: moment ratio {moment_ratio:.2e}, rho ratio {rho_ratio:.2e}",
            rho.family_name()
        ));
        pass &= report.pass;
    }
    verdict_line(
        "criterion 8 (uniform integrability)",
        pass,
        &details.join("; "),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 9. CLI determinism
// -------------------------------------------------------------------------

#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("martingale.json");
    let out_a = dir.path().join("run-a");
    let out_b = dir.path().join("run-b");
    fs::write(
        &config_path,
        r#"{
  "model": {"dim": 1, "brownian_dim": 1, "drift": [0.0], "diffusion": [[1.0]], "atoms": []},
  "grid": {"horizon": 1.0, "steps": 50},
  "ensemble": {"paths": 10000, "seed": 20240501},
  "generator": {"id": "zero"},
  "terminal": {"id": "state"},
  "scheme": {"basis_degree": 1},
  "experiment": {"kind": "solve", "dump_ensemble": true},
  "output_dir": "unused"
}"#,
    )
    .unwrap();

    for out in [&out_a, &out_b] {
        let status = Command::new(env!("CARGO_BIN_EXE_levy-bsde"))
            .arg("run")
            .arg(&config_path)
            .arg("--output-dir")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut pass = true;
    for file in ["solution.csv", "ensemble.csv"] {
        let a = fs::read(out_a.join(file)).unwrap();
        let b = fs::read(out_b.join(file)).unwrap();
        pass &= a == b;
    }
    verdict_line(
        "criterion 9 (CLI determinism)",
        pass,
        "solution.csv and ensemble.csv byte-identical across runs",
    );
    assert!(pass);
}
