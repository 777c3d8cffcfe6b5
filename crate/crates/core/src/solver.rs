//! Direct solution of the stationary saddle-point problem, solution
//! checks against the node conditions, error norms between nested
//! refinements, and convergence studies.

use std::time::Instant;

use faer::prelude::*;
use faer::sparse::SparseColMat;
use nalgebra::{DMatrix, DVector, Vector3};

use crate::assembly::{Assembler, SaddleSystem, Triplet};
use crate::basis::{LagrangeBasis, LegendreBasis};
use crate::error::CoreError;
use crate::fields::{
    eval_multiplier, eval_primal, eval_primal_deriv, mean_integrals, MixedSolution,
};
use crate::layout::{DofLayout, FeOrders};
use crate::linalg::{symmetric_scaling, LdltFactor};
use crate::loads::Load;
use crate::network::StentNetwork;
use crate::quadrature::gauss_legendre;

/// Which factorization backend to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorPath {
    /// Dense below `DENSE_LIMIT` unknowns, sparse above.
    Auto,
    /// Dense symmetric-indefinite LDL^T with Bunch-Kaufman pivoting.
    Dense,
    /// Sparse LU with partial pivoting.
    Sparse,
}

pub const DENSE_LIMIT: usize = 700;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub path: FactorPath,
    /// Relative pivot tolerance of the dense factorization.
    pub pivot_tol: f64,
    /// Accepted relative residual |K z - F| / |F|.
    pub target_residual: f64,
    pub max_refinement_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            path: FactorPath::Auto,
            pivot_tol: 1e-12,
            target_residual: 1e-10,
            max_refinement_steps: 40,
        }
    }
}

/// A stationary problem: network, orders, load and solver options.
pub struct StaticProblem<'a> {
    pub net: &'a StentNetwork,
    pub orders: FeOrders,
    pub load: Load,
    pub options: SolverOptions,
}

/// Solved static problem with the flat vector, decoded fields and stats.
pub struct StaticSolution {
    pub z: DVector<f64>,
    pub fields: MixedSolution,
    pub layout: DofLayout,
    /// |K z - F| / |F|, or the absolute residual when F = 0.
    pub residual: f64,
    pub dim: usize,
    pub assemble_seconds: f64,
    pub factor_seconds: f64,
}

/// Sparse-or-dense factorization of a symmetric indefinite matrix with
/// symmetric equilibration. Reusable across solves of the same matrix.
pub enum SymmetricFactor {
    Dense {
        factor: LdltFactor,
        scaling: DVector<f64>,
    },
    Sparse {
        lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
        scaling: DVector<f64>,
    },
}

impl SymmetricFactor {
    /// Factorizes from triplets of the unscaled matrix.
    pub fn new(
        dim: usize,
        triplets: &[Triplet],
        options: &SolverOptions,
    ) -> Result<SymmetricFactor, CoreError> {
        let dense_path = match options.path {
            FactorPath::Dense => true,
            FactorPath::Sparse => false,
            FactorPath::Auto => dim <= DENSE_LIMIT,
        };
        if dense_path {
            let mut k = DMatrix::zeros(dim, dim);
            for &(r, c, v) in triplets {
                k[(r, c)] += v;
            }
            let scaling = symmetric_scaling(&k);
            for r in 0..dim {
                for c in 0..dim {
                    k[(r, c)] *= scaling[r] * scaling[c];
                }
            }
            match LdltFactor::new(&k, options.pivot_tol) {
                Ok(factor) => return Ok(SymmetricFactor::Dense { factor, scaling }),
                // Extreme stiffness contrasts can trip the pivot tolerance
                // even though the matrix is regular; on the auto path the
                // sparse factorization decides instead.
                Err(CoreError::SingularSystem { .. }) if options.path == FactorPath::Auto => {}
                Err(e) => return Err(e),
            }
            Self::new_sparse(dim, triplets)
        } else {
            Self::new_sparse(dim, triplets)
        }
    }

    fn new_sparse(dim: usize, triplets: &[Triplet]) -> Result<SymmetricFactor, CoreError> {
        // symmetric Ruiz equilibration: a few iterations bring every row
        // and column of D K D to unit infinity norm, which the threshold
        // pivoting of the sparse factorization needs on stiff systems
        let mut d = vec![1.0f64; dim];
        for _ in 0..4 {
            let mut rowmax = vec![0.0f64; dim];
            for &(r, c, v) in triplets {
                let s = (v * d[r] * d[c]).abs();
                if s > rowmax[r] {
                    rowmax[r] = s;
                }
            }
            for i in 0..dim {
                if rowmax[i] > 0.0 {
                    d[i] /= rowmax[i].sqrt();
                }
            }
        }
        let scaling = DVector::from_fn(dim, |i, _| d[i]);
        let scaled: Vec<faer::sparse::Triplet<usize, usize, f64>> = triplets
            .iter()
            .map(|&(r, c, v)| faer::sparse::Triplet::new(r, c, v * scaling[r] * scaling[c]))
            .collect();
        let mat = SparseColMat::try_new_from_triplets(dim, dim, &scaled)
            .map_err(|e| CoreError::Factorization(format!("{e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| CoreError::Factorization(format!("{e:?}")))?;
        Ok(SymmetricFactor::Sparse { lu, scaling })
    }

    /// Solves the unscaled system A x = b through the scaled factorization.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SymmetricFactor::Dense { factor, scaling } => {
                let mut rhs = DVector::from_fn(b.len(), |i, _| b[i] * scaling[i]);
                factor.solve_in_place(&mut rhs);
                DVector::from_fn(b.len(), |i, _| rhs[i] * scaling[i])
            }
            SymmetricFactor::Sparse { lu, scaling } => {
                let n = b.len();
                let rhs = faer::Mat::from_fn(n, 1, |i, _| b[i] * scaling[i]);
                let x = lu.solve(&rhs);
                DVector::from_fn(n, |i, _| x[(i, 0)] * scaling[i])
            }
        }
    }
}

/// y = K x from triplets.
pub fn apply_triplets(dim: usize, triplets: &[Triplet], x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(dim);
    for &(r, c, v) in triplets {
        y[r] += v * x[c];
    }
    y
}

/// Right-preconditioned restarted GMRES on K z = F with the factorization
/// as preconditioner. Plain iterative refinement is the stationary
/// iteration of the same splitting; when the factorization quality only
/// gives it a slow contraction, the Krylov acceleration still converges.
/// Returns the improved iterate.
pub fn gmres_refine(
    dim: usize,
    triplets: &[Triplet],
    factor: &SymmetricFactor,
    rhs: &DVector<f64>,
    mut z: DVector<f64>,
    target_rel: f64,
    restart: usize,
    max_cycles: usize,
) -> DVector<f64> {
    let fnorm = rhs.norm();
    if fnorm == 0.0 {
        return z;
    }
    for _ in 0..max_cycles {
        let r = rhs - apply_triplets(dim, triplets, &z);
        let beta = r.norm();
        if beta <= target_rel * fnorm {
            break;
        }
        // Arnoldi on K M^{-1} with modified Gram-Schmidt
        let mut basis: Vec<DVector<f64>> = vec![r / beta];
        let m = restart;
        let mut h = DMatrix::zeros(m + 1, m);
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = DVector::zeros(m + 1);
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let w_pre = factor.solve(&basis[j]);
            let mut w = apply_triplets(dim, triplets, &w_pre);
            for (i, v) in basis.iter().enumerate() {
                let hij = w.dot(v);
                h[(i, j)] = hij;
                w -= v * hij;
            }
            let hnext = w.norm();
            h[(j + 1, j)] = hnext;
            // Givens rotations keep the least-squares problem triangular
            for i in 0..j {
                let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                h[(i, j)] = t;
            }
            let denom = (h[(j, j)] * h[(j, j)] + hnext * hnext).sqrt();
            if denom == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[(j, j)] / denom;
            sn[j] = hnext / denom;
            h[(j, j)] = denom;
            h[(j + 1, j)] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            if g[j + 1].abs() <= target_rel * fnorm || hnext == 0.0 {
                break;
            }
            basis.push(w / hnext);
        }
        if used == 0 {
            break;
        }
        // back substitution for the Krylov coefficients
        let mut y = DVector::zeros(used);
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[(i, k)] * y[k];
            }
            y[i] = acc / h[(i, i)];
        }
        let mut correction = DVector::zeros(dim);
        for (i, v) in basis.iter().take(used).enumerate() {
            correction += v * y[i];
        }
        z += factor.solve(&correction);
    }
    z
}

/// Componentwise (Oettli-Prager) backward error of K z = F:
/// max over rows of |Kz - F| / (|K||z| + |F|). Rows whose denominator is
/// zero must have zero residual and are skipped otherwise reported as inf.
pub fn componentwise_backward_error(
    dim: usize,
    triplets: &[Triplet],
    z: &DVector<f64>,
    f: &DVector<f64>,
) -> f64 {
    let mut num: DVector<f64> = f.clone();
    let mut den: DVector<f64> = f.abs();
    for &(r, c, v) in triplets {
        num[r] -= v * z[c];
        den[r] += (v * z[c]).abs();
    }
    // rows whose denominator is at roundoff level carry no information;
    // the floor keeps them from dominating the measure
    let floor = f64::EPSILON * den.max();
    let mut eta = 0.0f64;
    for r in 0..dim {
        if den[r] > floor {
            eta = eta.max(num[r].abs() / den[r]);
        }
    }
    eta
}

/// Factors K and solves K z = F with iterative refinement. On a singular
/// factorization the numeric kernel dimension is attached when the system
/// is small enough to afford a dense SVD.
pub fn solve_system(
    sys: &SaddleSystem,
    options: &SolverOptions,
) -> Result<(DVector<f64>, f64, f64), CoreError> {
    let dim = sys.dim();
    let triplets = sys.k_triplets();
    if sys.rhs.amax() == 0.0 {
        return Ok((DVector::zeros(dim), 0.0, 0.0));
    }
    let started = Instant::now();
    let factor = match SymmetricFactor::new(dim, &triplets, options) {
        Ok(f) => f,
        Err(CoreError::Factorization(msg)) if dim <= 2000 => {
            return Err(numeric_kernel_diagnostic(sys, &msg));
        }
        Err(CoreError::SingularSystem { kernel_dim }) if dim <= 2000 => {
            return Err(numeric_kernel_diagnostic(
                sys,
                &format!("pivot breakdown, remaining {kernel_dim}"),
            ));
        }
        Err(e) => return Err(e),
    };
    let factor_seconds = started.elapsed().as_secs_f64();
    let fnorm = sys.rhs.norm();
    let mut z = factor.solve(&sys.rhs);
    let mut residual = (apply_triplets(dim, &triplets, &z) - &sys.rhs).norm() / fnorm;
    let mut backward = componentwise_backward_error(dim, &triplets, &z, &sys.rhs);
    // Iterative refinement. The global relative residual bottoms out at
    // roundoff of |K||z|, which for stiff materials can exceed the target
    // even though the backward error is at machine level, so either measure
    // passing accepts the solve.
    let mut stalled = false;
    for _ in 0..options.max_refinement_steps {
        if residual <= options.target_residual || backward <= options.target_residual {
            break;
        }
        let r = &sys.rhs - apply_triplets(dim, &triplets, &z);
        z += factor.solve(&r);
        let next = (apply_triplets(dim, &triplets, &z) - &sys.rhs).norm() / fnorm;
        if next > 0.5 * residual {
            stalled = true;
        }
        residual = next;
        backward = componentwise_backward_error(dim, &triplets, &z, &sys.rhs);
        if stalled {
            break;
        }
    }
    // A weak factorization still works as a preconditioner: accelerate the
    // same splitting with restarted GMRES instead of giving up.
    if residual > options.target_residual && backward > options.target_residual {
        z = gmres_refine(
            dim,
            &triplets,
            &factor,
            &sys.rhs,
            z,
            options.target_residual * 0.1,
            50,
            6,
        );
        residual = (apply_triplets(dim, &triplets, &z) - &sys.rhs).norm() / fnorm;
        backward = componentwise_backward_error(dim, &triplets, &z, &sys.rhs);
    }
    if residual > options.target_residual && backward > options.target_residual {
        return Err(CoreError::ResidualTooLarge {
            achieved: residual.min(backward),
        });
    }
    Ok((z, residual.min(backward), factor_seconds))
}

fn numeric_kernel_diagnostic(sys: &SaddleSystem, _msg: &str) -> CoreError {
    let k = sys.k_dense();
    let svd = k.svd(false, false);
    let smax = svd.singular_values.max();
    let kernel_dim = svd
        .singular_values
        .iter()
        .filter(|s| **s <= 1e-12 * smax)
        .count();
    CoreError::SingularSystem { kernel_dim }
}

/// Assembles and solves the stationary problem.
pub fn solve_static(problem: &StaticProblem) -> Result<StaticSolution, CoreError> {
    let t0 = Instant::now();
    let asm = Assembler::new(problem.net, problem.orders)?;
    let sys = asm.system(&problem.load, 0.0);
    let assemble_seconds = t0.elapsed().as_secs_f64();
    let (z, residual, factor_seconds) = solve_system(&sys, &problem.options)?;
    let fields = MixedSolution::decode(&z, &sys.layout);
    Ok(StaticSolution {
        z,
        fields,
        layout: sys.layout,
        residual,
        dim: asm.layout.dim_total(),
        assemble_seconds,
        factor_seconds,
    })
}

/// Residuals of the node conditions and mean constraints, each with the
/// scale of the quantities entering it.
#[derive(Debug, Clone, Copy)]
pub struct SolutionDiagnostics {
    /// max over strut endpoints of |u - U| and |omega - Omega| (infinity norm)
    pub kinematic_residual: f64,
    pub kinematic_scale: f64,
    /// max over vertices of the force and couple balance defects
    pub balance_residual: f64,
    pub balance_scale: f64,
    /// max of |int u| and |int omega| over the network
    pub mean_residual: f64,
    pub mean_scale: f64,
}

impl SolutionDiagnostics {
    /// Largest residual relative to its scale.
    pub fn worst_relative(&self) -> f64 {
        let rel = |r: f64, s: f64| if s > 0.0 { r / s } else { r };
        rel(self.kinematic_residual, self.kinematic_scale)
            .max(rel(self.balance_residual, self.balance_scale))
            .max(rel(self.mean_residual, self.mean_scale))
    }
}

/// Checks kinematic continuity, force/couple balance and the two mean
/// constraints on a decoded solution. A pure report; nothing is modified.
pub fn check_solution(
    net: &StentNetwork,
    orders: FeOrders,
    sol: &MixedSolution,
) -> SolutionDiagnostics {
    let n = orders.n();
    let mut kin_res = 0.0f64;
    let mut kin_scale = 0.0f64;
    for strut in &net.struts {
        let e = strut.id;
        // nodal basis: endpoint values are the first and last coefficients
        let pairs = [
            (sol.u[e][0], sol.vertex_u[strut.tail]),
            (sol.u[e][n], sol.vertex_u[strut.head]),
            (sol.omega[e][0], sol.vertex_omega[strut.tail]),
            (sol.omega[e][n], sol.vertex_omega[strut.head]),
        ];
        for (field_end, vertex_val) in pairs {
            kin_res = kin_res.max((field_end - vertex_val).amax());
            kin_scale = kin_scale.max(field_end.amax()).max(vertex_val.amax());
        }
    }
    let mut bal_res = 0.0f64;
    let mut bal_scale = 0.0f64;
    let n_v = net.n_vertices();
    let mut force = vec![Vector3::zeros(); n_v];
    let mut couple = vec![Vector3::zeros(); n_v];
    for strut in &net.struts {
        force[strut.head] += sol.p_plus[strut.id];
        force[strut.tail] -= sol.p_minus[strut.id];
        couple[strut.head] += sol.q_plus[strut.id];
        couple[strut.tail] -= sol.q_minus[strut.id];
        bal_scale = bal_scale
            .max(sol.p_plus[strut.id].amax())
            .max(sol.p_minus[strut.id].amax())
            .max(sol.q_plus[strut.id].amax())
            .max(sol.q_minus[strut.id].amax());
    }
    // Contact values inherit roundoff from the whole multiplier solve, so
    // when a load is carried entirely by the mean multipliers (contacts
    // exactly zero), the balance scale comes from alpha and beta instead.
    let mean_len = net.total_length() / net.n_struts().max(1) as f64;
    bal_scale = bal_scale.max(sol.alpha.amax().max(sol.beta.amax()) * mean_len);
    for v in 0..n_v {
        bal_res = bal_res.max(force[v].amax()).max(couple[v].amax());
    }
    let layout = DofLayout::new(net, orders);
    let (int_u, int_w) = mean_integrals(net, &layout, sol);
    let mut max_u = 0.0f64;
    let mut max_w = 0.0f64;
    for e in 0..net.n_struts() {
        for c in &sol.u[e] {
            max_u = max_u.max(c.amax());
        }
        for c in &sol.omega[e] {
            max_w = max_w.max(c.amax());
        }
    }
    let total_len = net.total_length();
    SolutionDiagnostics {
        kinematic_residual: kin_res,
        kinematic_scale: kin_scale,
        balance_residual: bal_res,
        balance_scale: bal_scale,
        mean_residual: int_u.amax().max(int_w.amax()),
        mean_scale: total_len * max_u.max(max_w),
    }
}

/// One measured error: quantity name, norm name, value.
#[derive(Debug, Clone)]
pub struct QuantityError {
    pub quantity: &'static str,
    pub norm: &'static str,
    pub error: f64,
}

/// Errors of a coarse solution against a reference on a nested refinement.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// max strut length of the coarse network
    pub h: f64,
    pub entries: Vec<QuantityError>,
}

impl ErrorReport {
    pub fn get(&self, quantity: &str, norm: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.quantity == quantity && e.norm == norm)
            .map(|e| e.error)
            .expect("unknown quantity/norm pair")
    }
}

/// Maps each coarse vertex to the reference vertex at the same position,
/// verifying that the reference struts tile the coarse struts.
fn nested_vertex_map(
    net_h: &StentNetwork,
    net_ref: &StentNetwork,
    ratio: usize,
) -> Result<Vec<usize>, CoreError> {
    let mut map = vec![usize::MAX; net_h.n_vertices()];
    for (c, strut) in net_h.struts.iter().enumerate() {
        let tol = 1e-9 * strut.length;
        let first = &net_ref.struts[c * ratio];
        let last = &net_ref.struts[c * ratio + ratio - 1];
        let tails_match = (net_h.position(strut.tail) - net_ref.position(first.tail)).norm() < tol;
        let heads_match = (net_h.position(strut.head) - net_ref.position(last.head)).norm() < tol;
        if !tails_match || !heads_match {
            return Err(CoreError::NotNested {
                ratio,
                detail: format!("strut {c} endpoints do not tile"),
            });
        }
        // interior chain continuity and equal sub-lengths
        for j in 0..ratio {
            let sub = &net_ref.struts[c * ratio + j];
            if (sub.length - strut.length / ratio as f64).abs() > tol {
                return Err(CoreError::NotNested {
                    ratio,
                    detail: format!("strut {c} sub-strut {j} has wrong length"),
                });
            }
            if j > 0 {
                let prev = &net_ref.struts[c * ratio + j - 1];
                if prev.head != sub.tail {
                    return Err(CoreError::NotNested {
                        ratio,
                        detail: format!("strut {c} chain broken at {j}"),
                    });
                }
            }
        }
        map[strut.tail] = first.tail;
        map[strut.head] = last.head;
    }
    if map.contains(&usize::MAX) {
        return Err(CoreError::NotNested {
            ratio,
            detail: "unmapped vertex".into(),
        });
    }
    Ok(map)
}

/// Error norms of `sol_h` against `sol_ref`, where the reference network
/// refines each coarse strut into `n_E_ref / n_E_h` equal pieces. Fields are
/// compared by evaluating the coarse polynomials on the fine struts (exact
/// restriction); discrete quantities use the l1 mean.
pub fn error_norms(
    net_h: &StentNetwork,
    sol_h: &MixedSolution,
    net_ref: &StentNetwork,
    sol_ref: &MixedSolution,
    orders: FeOrders,
) -> Result<ErrorReport, CoreError> {
    let n_h = net_h.n_struts();
    let n_ref = net_ref.n_struts();
    if !n_ref.is_multiple_of(n_h) || n_ref < n_h {
        return Err(CoreError::NotNested {
            ratio: 0,
            detail: format!("{n_ref} reference struts over {n_h}"),
        });
    }
    let ratio = n_ref / n_h;
    let vertex_map = nested_vertex_map(net_h, net_ref, ratio)?;
    let n = orders.n();
    let k = orders.k();
    let rule = gauss_legendre(n + 2);
    let mut l2_u = 0.0;
    let mut h1_u = 0.0;
    let mut l2_w = 0.0;
    let mut l2_q = 0.0;
    let mut l2_p = 0.0;
    for (c, strut) in net_h.struts.iter().enumerate() {
        let basis_h = LagrangeBasis::new(n, strut.length);
        let mult_h = LegendreBasis::new(k, strut.length);
        let sub_len = strut.length / ratio as f64;
        for j in 0..ratio {
            let f = c * ratio + j;
            let fine = &net_ref.struts[f];
            let basis_f = LagrangeBasis::new(n, fine.length);
            let mult_f = LegendreBasis::new(k, fine.length);
            let mapped = rule.mapped(fine.length);
            for (s, w) in mapped.nodes.iter().zip(&mapped.weights) {
                let s_c = j as f64 * sub_len + s;
                let du = eval_primal(&basis_h, &sol_h.u[c], s_c)
                    - eval_primal(&basis_f, &sol_ref.u[f], *s);
                let ddu = eval_primal_deriv(&basis_h, &sol_h.u[c], s_c)
                    - eval_primal_deriv(&basis_f, &sol_ref.u[f], *s);
                let dw = eval_primal(&basis_h, &sol_h.omega[c], s_c)
                    - eval_primal(&basis_f, &sol_ref.omega[f], *s);
                let dq = eval_multiplier(&mult_h, &sol_h.q[c], s_c)
                    - eval_multiplier(&mult_f, &sol_ref.q[f], *s);
                let dp = eval_multiplier(&mult_h, &sol_h.p[c], s_c)
                    - eval_multiplier(&mult_f, &sol_ref.p[f], *s);
                l2_u += w * du.norm_squared();
                h1_u += w * ddu.norm_squared();
                l2_w += w * dw.norm_squared();
                l2_q += w * dq.norm_squared();
                l2_p += w * dp.norm_squared();
            }
        }
    }
    let mean_abs = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for v in vals {
            sum += v;
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };
    let contact_err = |h_vals: &[Vector3<f64>], ref_pick: &dyn Fn(usize) -> Vector3<f64>| -> f64 {
        mean_abs(&mut (0..n_h).flat_map(|c| {
            let d = h_vals[c] - ref_pick(c);
            [d.x.abs(), d.y.abs(), d.z.abs()]
        }))
    };
    let p_plus_err = contact_err(&sol_h.p_plus, &|c| sol_ref.p_plus[c * ratio + ratio - 1]);
    let p_minus_err = contact_err(&sol_h.p_minus, &|c| sol_ref.p_minus[c * ratio]);
    let q_plus_err = contact_err(&sol_h.q_plus, &|c| sol_ref.q_plus[c * ratio + ratio - 1]);
    let q_minus_err = contact_err(&sol_h.q_minus, &|c| sol_ref.q_minus[c * ratio]);
    let vertex_err = |h_vals: &[Vector3<f64>], ref_vals: &[Vector3<f64>]| -> f64 {
        mean_abs(&mut (0..net_h.n_vertices()).flat_map(|v| {
            let d = h_vals[v] - ref_vals[vertex_map[v]];
            [d.x.abs(), d.y.abs(), d.z.abs()]
        }))
    };
    let big_u_err = vertex_err(&sol_h.vertex_u, &sol_ref.vertex_u);
    let big_w_err = vertex_err(&sol_h.vertex_omega, &sol_ref.vertex_omega);
    let h = net_h
        .struts
        .iter()
        .map(|s| s.length)
        .fold(0.0f64, f64::max);
    Ok(ErrorReport {
        h,
        entries: vec![
            QuantityError {
                quantity: "u",
                norm: "L2",
                error: l2_u.sqrt(),
            },
            QuantityError {
                quantity: "u",
                norm: "H1semi",
                error: h1_u.sqrt(),
            },
            QuantityError {
                quantity: "omega",
                norm: "L2",
                error: l2_w.sqrt(),
            },
            QuantityError {
                quantity: "q",
                norm: "L2",
                error: l2_q.sqrt(),
            },
            QuantityError {
                quantity: "p",
                norm: "L2",
                error: l2_p.sqrt(),
            },
            QuantityError {
                quantity: "U",
                norm: "l1mean",
                error: big_u_err,
            },
            QuantityError {
                quantity: "Omega",
                norm: "l1mean",
                error: big_w_err,
            },
            QuantityError {
                quantity: "P+",
                norm: "l1mean",
                error: p_plus_err,
            },
            QuantityError {
                quantity: "P-",
                norm: "l1mean",
                error: p_minus_err,
            },
            QuantityError {
                quantity: "Q+",
                norm: "l1mean",
                error: q_plus_err,
            },
            QuantityError {
                quantity: "Q-",
                norm: "l1mean",
                error: q_minus_err,
            },
        ],
    })
}

/// One row of a convergence table.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub split: usize,
    pub h: f64,
    pub quantity: String,
    pub norm: String,
    pub error: f64,
    /// None when the errors vanish (exact regime).
    pub rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Rate on the last level pair for a quantity/norm, if defined.
    pub fn last_rate(&self, quantity: &str, norm: &str) -> Option<f64> {
        self.rows
            .iter().rfind(|r| r.quantity == quantity && r.norm == norm)
            .and_then(|r| r.rate)
    }
}

/// Rate between consecutive levels per the log-ratio formula; `None` when
/// either error vanishes.
pub fn convergence_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if e_coarse <= 0.0 || e_fine <= 0.0 {
        return None;
    }
    Some((e_fine / e_coarse).ln() / (h_fine / h_coarse).ln())
}

/// Solves the problem on `refine(base, split)` for each level, compares
/// against a reference on `refine(base, reference_split)`, and tabulates
/// errors and rates. Levels run on up to `threads` workers.
pub fn convergence_study(
    base: &StentNetwork,
    orders: FeOrders,
    load: &Load,
    levels: &[usize],
    reference_split: usize,
    options: &SolverOptions,
    threads: usize,
) -> Result<ConvergenceTable, CoreError> {
    let max_level = levels.iter().copied().max().unwrap_or(0);
    if reference_split <= max_level {
        return Err(CoreError::InvalidParameters(format!(
            "reference split {reference_split} must exceed the finest level {max_level}"
        )));
    }
    for &m in levels {
        if !reference_split.is_multiple_of(m) {
            return Err(CoreError::InvalidParameters(format!(
                "reference split {reference_split} must be divisible by level {m}"
            )));
        }
    }
    let ref_net = base.refine(reference_split);
    let ref_sol = solve_static(&StaticProblem {
        net: &ref_net,
        orders,
        load: load.clone(),
        options: *options,
    })?;
    let mut reports: Vec<Option<Result<ErrorReport, CoreError>>> =
        (0..levels.len()).map(|_| None).collect();
    let workers = threads.max(1).min(levels.len().max(1));
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers)
            .map(|w| (w..levels.len()).step_by(workers).collect())
            .collect();
        let mut handles = Vec::new();
        for chunk in chunks {
            let ref_net = &ref_net;
            let ref_sol = &ref_sol;
            handles.push(scope.spawn(move || {
                let mut local = Vec::new();
                for idx in chunk {
                    let net = base.refine(levels[idx]);
                    let result = solve_static(&StaticProblem {
                        net: &net,
                        orders,
                        load: load.clone(),
                        options: *options,
                    })
                    .and_then(|sol| {
                        error_norms(&net, &sol.fields, ref_net, &ref_sol.fields, orders)
                    });
                    local.push((idx, result));
                }
                local
            }));
        }
        for h in handles {
            for (idx, result) in h.join().expect("worker panicked") {
                reports[idx] = Some(result);
            }
        }
    });
    let reports: Vec<ErrorReport> = reports
        .into_iter()
        .map(|r| r.expect("level not computed"))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    if let Some(first) = reports.first() {
        for entry in &first.entries {
            for (i, report) in reports.iter().enumerate() {
                let error = report.get(entry.quantity, entry.norm);
                let rate = if i == 0 {
                    None
                } else {
                    convergence_rate(
                        reports[i - 1].get(entry.quantity, entry.norm),
                        error,
                        reports[i - 1].h,
                        report.h,
                    )
                };
                rows.push(ConvergenceRow {
                    split: levels[i],
                    h: report.h,
                    quantity: entry.quantity.to_string(),
                    norm: entry.norm.to_string(),
                    error,
                    rate,
                });
            }
        }
    }
    Ok(ConvergenceTable { rows })
}
