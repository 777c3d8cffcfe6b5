//! CSV writers with a fixed 17-significant-digit float format so files
//! round-trip exactly through f64.

use std::io::Write;
use std::path::Path;

use crate::basis::LagrangeBasis;
use crate::basis::LegendreBasis;
use crate::error::CoreError;
use crate::fields::{eval_multiplier, eval_primal, MixedSolution};
use crate::layout::FeOrders;
use crate::network::StentNetwork;
use crate::solver::ConvergenceTable;

/// 17 significant digits, scientific.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// `solution.csv`: per strut, samples at the primal nodes with the four
/// polynomial fields.
pub fn write_solution_csv(
    path: &Path,
    net: &StentNetwork,
    orders: FeOrders,
    sol: &MixedSolution,
) -> Result<(), CoreError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "strut,s,ux,uy,uz,wx,wy,wz,qx,qy,qz,px,py,pz")?;
    let n = orders.n();
    let k = orders.k();
    for strut in &net.struts {
        let basis = LagrangeBasis::new(n, strut.length);
        let mult = LegendreBasis::new(k, strut.length);
        for i in 0..=n {
            let s = basis.nodes[i];
            let u = eval_primal(&basis, &sol.u[strut.id], s);
            let w = eval_primal(&basis, &sol.omega[strut.id], s);
            let q = eval_multiplier(&mult, &sol.q[strut.id], s);
            let p = eval_multiplier(&mult, &sol.p[strut.id], s);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                strut.id,
                fmt(s),
                fmt(u.x),
                fmt(u.y),
                fmt(u.z),
                fmt(w.x),
                fmt(w.y),
                fmt(w.z),
                fmt(q.x),
                fmt(q.y),
                fmt(q.z),
                fmt(p.x),
                fmt(p.y),
                fmt(p.z),
            )?;
        }
    }
    Ok(())
}

/// `errors.csv`: level, h, quantity, norm, error, rate ("exact" when the
/// error vanishes at some level).
pub fn write_errors_csv(path: &Path, table: &ConvergenceTable) -> Result<(), CoreError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "level,h,quantity,norm,error,rate")?;
    for row in &table.rows {
        let rate = match row.rate {
            Some(r) => fmt(r),
            None => {
                if row.error == 0.0 {
                    "exact".to_string()
                } else {
                    String::new()
                }
            }
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.split,
            fmt(row.h),
            row.quantity,
            row.norm,
            fmt(row.error),
            rate
        )?;
    }
    Ok(())
}

/// `timings.csv`: phase, problem dimension, seconds.
pub fn write_timings_csv(path: &Path, rows: &[(String, usize, f64)]) -> Result<(), CoreError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "phase,dimension,seconds")?;
    for (phase, dim, secs) in rows {
        writeln!(out, "{phase},{dim},{}", fmt(*secs))?;
    }
    Ok(())
}
