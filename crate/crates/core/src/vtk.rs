//! Legacy ASCII VTK polydata output of the (deformed) network.
//!
//! Each strut becomes a polyline sampled at the primal nodes, so curved
//! deformations of straight struts stay visible. Point data carries the
//! displacement and rotation vectors.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::basis::LagrangeBasis;
use crate::error::CoreError;
use crate::fields::{eval_primal, MixedSolution};
use crate::layout::FeOrders;
use crate::network::StentNetwork;

/// Writes `positions + scale * u` as polydata. With `sol = None` the
/// undeformed network is written with zero point data.
pub fn write_polydata(
    path: &Path,
    net: &StentNetwork,
    orders: FeOrders,
    sol: Option<&MixedSolution>,
    scale: f64,
) -> Result<(), CoreError> {
    let n = orders.n();
    let samples = n + 1;
    let n_points = net.n_struts() * samples;
    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(n_points);
    let mut displacements: Vec<Vector3<f64>> = Vec::with_capacity(n_points);
    let mut rotations: Vec<Vector3<f64>> = Vec::with_capacity(n_points);
    for strut in &net.struts {
        let basis = LagrangeBasis::new(n, strut.length);
        for i in 0..samples {
            let s = basis.nodes[i];
            let x = net.point_on(strut.id, s);
            let (u, w) = match sol {
                Some(sol) => (
                    eval_primal(&basis, &sol.u[strut.id], s),
                    eval_primal(&basis, &sol.omega[strut.id], s),
                ),
                None => (Vector3::zeros(), Vector3::zeros()),
            };
            points.push(x + u * scale);
            displacements.push(u);
            rotations.push(w);
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "strut network snapshot")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET POLYDATA")?;
    writeln!(out, "POINTS {} double", n_points)?;
    for p in &points {
        writeln!(out, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z)?;
    }
    writeln!(
        out,
        "LINES {} {}",
        net.n_struts(),
        net.n_struts() * (samples + 1)
    )?;
    for e in 0..net.n_struts() {
        write!(out, "{samples}")?;
        for i in 0..samples {
            write!(out, " {}", e * samples + i)?;
        }
        writeln!(out)?;
    }
    writeln!(out, "POINT_DATA {}", n_points)?;
    writeln!(out, "VECTORS displacement double")?;
    for u in &displacements {
        writeln!(out, "{:.17e} {:.17e} {:.17e}", u.x, u.y, u.z)?;
    }
    writeln!(out, "VECTORS rotation double")?;
    for w in &rotations {
        writeln!(out, "{:.17e} {:.17e} {:.17e}", w.x, w.y, w.z)?;
    }
    Ok(())
}
