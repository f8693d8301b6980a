//! CSV emission for ensembles, solutions and report tables.
//!
//! Floats are written with Rust's shortest round-trip formatting so that
//! identical runs produce byte-identical files.

use std::io::{self, Write};

use crate::analysis::{SweepReport, TruncationReport};
use crate::inequalities::BihariBound;
use crate::model::PathEnsemble;
use crate::solver::BsdeSolution;

/// `path,step,component,X` — one row per state entry.
pub fn write_ensemble<W: Write>(out: &mut W, ensemble: &PathEnsemble) -> io::Result<()> {
    writeln!(out, "path,step,component,X")?;
    for path in 0..ensemble.paths {
        for step in 0..=ensemble.steps {
            let state = ensemble.state_at(path, step);
            for (component, value) in state.iter().enumerate() {
                writeln!(out, "{path},{step},{component},{value}")?;
            }
        }
    }
    Ok(())
}

/// `path,step,field,index,value` with `field` in `{Y, Z, U}`.
pub fn write_solution<W: Write>(out: &mut W, sol: &BsdeSolution) -> io::Result<()> {
    writeln!(out, "path,step,field,index,value")?;
    for path in 0..sol.paths {
        for step in 0..=sol.steps {
            for (index, value) in sol.y_at(path, step).iter().enumerate() {
                writeln!(out, "{path},{step},Y,{index},{value}")?;
            }
        }
        for step in 0..sol.steps {
            for (index, value) in sol.z_at(path, step).iter().enumerate() {
                writeln!(out, "{path},{step},Z,{index},{value}")?;
            }
            for (index, value) in sol.u_at(path, step).iter().enumerate() {
                writeln!(out, "{path},{step},U,{index},{value}")?;
            }
        }
    }
    Ok(())
}

/// `epsilon_or_n,sp,lpw,lpn,verdict` for the stability sweep.
pub fn write_sweep<W: Write>(out: &mut W, report: &SweepReport) -> io::Result<()> {
    writeln!(out, "epsilon_or_n,sp,lpw,lpn,verdict")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.scale,
            row.norms.sp,
            row.norms.lpw,
            row.norms.lpn,
            if row.nonincreasing { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

/// `epsilon_or_n,sp,lpw,lpn,verdict` for the truncation study; the reference
/// row is labeled `inf`.
pub fn write_truncation<W: Write>(out: &mut W, report: &TruncationReport) -> io::Result<()> {
    writeln!(out, "epsilon_or_n,sp,lpw,lpn,verdict")?;
    let verdict = if report.pass { "pass" } else { "fail" };
    for row in &report.rows {
        let label = row
            .level
            .map(|l| l.to_string())
            .unwrap_or_else(|| "inf".to_string());
        writeln!(
            out,
            "{label},{},{},{},{verdict}",
            row.sp_distance, row.lpw_distance, row.lpn_distance
        )?;
    }
    Ok(())
}

/// `t,bound,in_domain`.
pub fn write_bihari<W: Write>(out: &mut W, bound: &BihariBound) -> io::Result<()> {
    writeln!(out, "t,bound,in_domain")?;
    for ((t, b), in_dom) in bound
        .nodes
        .iter()
        .zip(&bound.bound)
        .zip(&bound.in_domain)
    {
        writeln!(out, "{t},{b},{in_dom}")?;
    }
    Ok(())
}

/// `t,mean_y,mean_y_prime,mean_gap` for comparison runs.
pub fn write_comparison_nodes<W: Write>(
    out: &mut W,
    rows: &[(f64, f64, f64, f64)],
) -> io::Result<()> {
    writeln!(out, "t,mean_y,mean_y_prime,mean_gap")?;
    for (t, a, b, gap) in rows {
        writeln!(out, "{t},{a},{b},{gap}")?;
    }
    Ok(())
}
