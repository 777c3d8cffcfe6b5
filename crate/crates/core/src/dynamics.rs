//! The evolution problem -E zdd + K z = F(t): mass assembly, implicit
//! midpoint integration with factorization reuse, consistent
//! initialization, and the canonical form of the (E, K) pencil.
//!
//! E is positive semidefinite with the mass Gram matrix in the
//! displacement block and zeros elsewhere, so the system is a linear
//! second-order differential-algebraic equation. The midpoint rule applied
//! to the first-order form solves one linear system with the constant
//! matrix -E + 0.25 dt^2 K per step; the algebraic rows of K z = F are
//! preserved exactly by the scheme, which the trajectory checks verify.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::assembly::{Assembler, Triplet};
use crate::error::CoreError;
use crate::fields::MixedSolution;
use crate::layout::FeOrders;
use crate::linalg::full_qr;
use crate::loads::Load;
use crate::network::StentNetwork;
use crate::solver::{apply_triplets, SolverOptions, SymmetricFactor};

/// Largest dimension for which the dense canonical-form analysis and the
/// dense consistent-initialization path are attempted.
pub const CANONICAL_DENSE_LIMIT: usize = 3000;

/// State of the first-order form at one time instant.
#[derive(Debug, Clone)]
pub struct DynamicState {
    pub t: f64,
    pub z: DVector<f64>,
    pub zdot: DVector<f64>,
}

/// Integrated trajectory, one state per step (index 0 is the initial state).
pub struct Trajectory {
    pub states: Vec<DynamicState>,
    pub dt: f64,
    pub factor_seconds: f64,
    pub step_seconds: f64,
}

impl Trajectory {
    pub fn last(&self) -> &DynamicState {
        self.states.last().expect("trajectory has initial state")
    }
}

/// Reusable factorization of the step matrix -E + 0.25 dt^2 K, keyed by dt.
/// Keeps the matrix entries so step solves can run iterative refinement
/// against the factored approximation.
pub struct StepFactor {
    pub dt: f64,
    factor: SymmetricFactor,
    triplets: Vec<Triplet>,
}

impl StepFactor {
    /// Solves the step system with two refinement passes; one fresh solve
    /// per step is not accurate enough for stiff sections, and the error
    /// would accumulate over the trajectory.
    fn solve_refined(&self, dim: usize, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.factor.solve(rhs);
        for _ in 0..2 {
            let r = rhs - apply_triplets(dim, &self.triplets, &x);
            x += self.factor.solve(&r);
        }
        x
    }
}

/// Assembled operators of one evolution problem.
pub struct DynamicOperator<'a> {
    pub asm: Assembler<'a>,
    pub k_triplets: Vec<Triplet>,
    pub e_triplets: Vec<Triplet>,
}

/// User-suppliable initial data: nodal coefficients of the displacement
/// field and its velocity, per strut. Multiplier and junction components
/// are always computed, never taken from the user.
#[derive(Debug, Clone, Default)]
pub struct InitialData {
    pub u0: Option<Vec<Vec<Vector3<f64>>>>,
    pub u0_dot: Option<Vec<Vec<Vector3<f64>>>>,
}

/// Consistent initial state plus the corrections that were applied.
pub struct ConsistentState {
    pub state: DynamicState,
    /// norm of the change applied to the user displacement data
    pub u_correction: f64,
    /// norm of the change applied to the user velocity data
    pub u_dot_correction: f64,
}

impl<'a> DynamicOperator<'a> {
    pub fn new(net: &'a StentNetwork, orders: FeOrders) -> Result<Self, CoreError> {
        let asm = Assembler::new(net, orders)?;
        let sys_a = asm.assemble_a();
        let sys_b = asm.assemble_b();
        let mut k_triplets = Vec::with_capacity(sys_a.len() + 2 * sys_b.len());
        k_triplets.extend_from_slice(&sys_a);
        for &(r, c, v) in &sys_b {
            k_triplets.push((r, c, v));
            k_triplets.push((c, r, v));
        }
        let e_triplets = asm.assemble_mass();
        Ok(DynamicOperator {
            asm,
            k_triplets,
            e_triplets,
        })
    }

    pub fn dim(&self) -> usize {
        self.asm.layout.dim_total()
    }

    pub fn rhs_at(&self, load: &Load, t: f64) -> DVector<f64> {
        self.asm.assemble_rhs(load, t)
    }

    /// Triplets of -E + 0.25 dt^2 K.
    pub fn step_matrix_triplets(&self, dt: f64) -> Vec<Triplet> {
        let mut out = Vec::with_capacity(self.e_triplets.len() + self.k_triplets.len());
        for &(r, c, v) in &self.e_triplets {
            out.push((r, c, -v));
        }
        let s = 0.25 * dt * dt;
        for &(r, c, v) in &self.k_triplets {
            out.push((r, c, s * v));
        }
        out
    }

    /// Factorizes the step matrix once for reuse across all steps.
    pub fn precompute_factorization(
        &self,
        dt: f64,
        options: &SolverOptions,
    ) -> Result<StepFactor, CoreError> {
        if dt <= 0.0 {
            return Err(CoreError::InvalidParameters(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let trips = self.step_matrix_triplets(dt);
        let factor = SymmetricFactor::new(self.dim(), &trips, options).map_err(|e| match e {
            CoreError::SingularSystem { kernel_dim } => CoreError::Factorization(format!(
                "step matrix singular for dt = {dt} (kernel dimension {kernel_dim})"
            )),
            other => other,
        })?;
        Ok(StepFactor {
            dt,
            factor,
            triplets: trips,
        })
    }

    /// Implicit midpoint on the first-order form. With `reuse`, the supplied
    /// handle is used for every step (it must match dt); without it the step
    /// matrix is refactorized at each step.
    pub fn integrate_midpoint(
        &self,
        load: &Load,
        dt: f64,
        steps: usize,
        init: &DynamicState,
        reuse: Option<&StepFactor>,
        options: &SolverOptions,
    ) -> Result<Trajectory, CoreError> {
        if let Some(handle) = reuse {
            if handle.dt != dt {
                return Err(CoreError::InvalidParameters(format!(
                    "factorization handle is keyed to dt = {}, step uses dt = {dt}",
                    handle.dt
                )));
            }
        }
        let rhs = |t: f64| self.rhs_at(load, t);
        midpoint_integrate(
            self.dim(),
            &self.e_triplets,
            &self.k_triplets,
            &rhs,
            init,
            dt,
            steps,
            reuse,
            options,
        )
    }

    /// Residual of the algebraic rows of K z = F(t) (all rows outside the
    /// displacement block) together with the scale of the row sums.
    pub fn algebraic_residual(&self, state: &DynamicState, load: &Load) -> (f64, f64) {
        let dim = self.dim();
        let f = self.rhs_at(load, state.t);
        let kz = apply_triplets(dim, &self.k_triplets, &state.z);
        let mut rowsum: DVector<f64> = DVector::zeros(dim);
        for &(r, c, v) in &self.k_triplets {
            rowsum[r] += (v * state.z[c]).abs();
        }
        let u_rows = self.asm.layout.group_u();
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..dim {
            if u_rows.contains(&r) {
                continue;
            }
            res = res.max((kz[r] - f[r]).abs());
            scale = scale.max(rowsum[r] + f[r].abs());
        }
        (res, scale)
    }

    /// L2(N) norm of the displacement field encoded in z.
    pub fn u_l2_norm(&self, z: &DVector<f64>) -> f64 {
        let lay = &self.asm.layout;
        let n1 = self.asm.orders.n() + 1;
        let mut total = 0.0;
        for (e, ctx) in self.asm.contexts.iter().enumerate() {
            for c in 0..3 {
                for i in 0..n1 {
                    let zi = z[lay.u.start + lay.primal_local(e, i, c)];
                    for j in 0..n1 {
                        let zj = z[lay.u.start + lay.primal_local(e, j, c)];
                        total += ctx.mass_primal[i][j] * zi * zj;
                    }
                }
            }
        }
        total.max(0.0).sqrt()
    }

    /// Dense E and K, for analysis at desk scale.
    pub fn dense_pencil(&self) -> Result<(DMatrix<f64>, DMatrix<f64>), CoreError> {
        let dim = self.dim();
        if dim > CANONICAL_DENSE_LIMIT {
            return Err(CoreError::InvalidParameters(format!(
                "dense pencil analysis limited to {CANONICAL_DENSE_LIMIT} unknowns, got {dim}"
            )));
        }
        let mut e = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.e_triplets {
            e[(r, c)] += v;
        }
        let mut k = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.k_triplets {
            k[(r, c)] += v;
        }
        Ok((e, k))
    }

    /// Canonical congruence transformation of the (E, K) pencil.
    pub fn canonical_form(&self) -> Result<CanonicalForm, CoreError> {
        let (e, k) = self.dense_pencil()?;
        canonical_form(&e, &k, &self.asm)
    }

    /// Builds a consistent initial state from (possibly inconsistent) user
    /// displacement and velocity fields. All multiplier, rotation and
    /// junction components are derived from the constraint rows; the user
    /// fields are projected where necessary and the correction reported.
    pub fn consistent_initial_state(
        &self,
        load: &Load,
        data: &InitialData,
        canonical: Option<&CanonicalForm>,
    ) -> Result<ConsistentState, CoreError> {
        let lay = &self.asm.layout;
        let dim = self.dim();
        let u_len = lay.u.len();
        let flatten = |field: &Option<Vec<Vec<Vector3<f64>>>>| -> Result<DVector<f64>, CoreError> {
            let mut out = DVector::zeros(u_len);
            if let Some(field) = field {
                if field.len() != lay.n_struts {
                    return Err(CoreError::Inconsistent(format!(
                        "initial field has {} struts, network has {}",
                        field.len(),
                        lay.n_struts
                    )));
                }
                for (e, coeffs) in field.iter().enumerate() {
                    if coeffs.len() != self.asm.orders.n() + 1 {
                        return Err(CoreError::Inconsistent(format!(
                            "initial field strut {e} has {} coefficients, expected {}",
                            coeffs.len(),
                            self.asm.orders.n() + 1
                        )));
                    }
                    for (i, v) in coeffs.iter().enumerate() {
                        for c in 0..3 {
                            out[lay.primal_local(e, i, c)] = v[c];
                        }
                    }
                }
            }
            Ok(out)
        };
        let u0 = flatten(&data.u0)?;
        let v0 = flatten(&data.u0_dot)?;
        // Fast path: zero data and a load that vanishes around t = 0 give the
        // zero state, which satisfies every constraint row exactly.
        let f0 = self.rhs_at(load, 0.0);
        let delta = 1e-5;
        let fdot_norm =
            (self.rhs_at(load, delta) - self.rhs_at(load, -delta)).norm() / (2.0 * delta);
        if u0.amax() == 0.0 && v0.amax() == 0.0 && f0.norm() == 0.0 && fdot_norm == 0.0 {
            return Ok(ConsistentState {
                state: DynamicState {
                    t: 0.0,
                    z: DVector::zeros(dim),
                    zdot: DVector::zeros(dim),
                },
                u_correction: 0.0,
                u_dot_correction: 0.0,
            });
        }
        let owned;
        let canon = match canonical {
            Some(c) => c,
            None => {
                owned = self.canonical_form()?;
                &owned
            }
        };
        let g0 = canon.reduced_forcing(&f0);
        let gdot = {
            let fp = canon.reduced_forcing(&self.rhs_at(load, delta));
            let fm = canon.reduced_forcing(&self.rhs_at(load, -delta));
            (fp - fm) / (2.0 * delta)
        };
        let (z2, z4, u_corr) = canon.consistent_pair(&u0, &g0)?;
        let (y2, y4, v_corr) = canon.consistent_pair(&v0, &gdot)?;
        let z = canon.lift(&z2, &z4);
        let zdot = canon.lift(&y2, &y4);
        Ok(ConsistentState {
            state: DynamicState { t: 0.0, z, zdot },
            u_correction: u_corr,
            u_dot_correction: v_corr,
        })
    }
}

/// Implicit midpoint for -E zdd + K z = F(t) in first-order form
/// (y = zdot). Each step solves (-E + 0.25 dt^2 K) applied to the new
/// velocity from the residual at the interval midpoint.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_integrate(
    dim: usize,
    e_triplets: &[Triplet],
    k_triplets: &[Triplet],
    rhs: &dyn Fn(f64) -> DVector<f64>,
    init: &DynamicState,
    dt: f64,
    steps: usize,
    reuse: Option<&StepFactor>,
    options: &SolverOptions,
) -> Result<Trajectory, CoreError> {
    assert!(dt > 0.0 && steps > 0);
    let factor_started = Instant::now();
    let step_triplets = match reuse {
        Some(_) => Vec::new(),
        None => combine_step_matrix(e_triplets, k_triplets, dt),
    };
    let factor_seconds = factor_started.elapsed().as_secs_f64();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(init.clone());
    let mut z = init.z.clone();
    let mut y = init.zdot.clone();
    let mut t = init.t;
    let step_started = Instant::now();
    for _ in 0..steps {
        let f_mid = rhs(t + 0.5 * dt);
        let residual = &f_mid - apply_triplets(dim, k_triplets, &(&z + &y * (0.5 * dt)));
        let update = match reuse {
            Some(handle) => handle.solve_refined(dim, &residual),
            None => {
                let fresh = StepFactor {
                    dt,
                    factor: SymmetricFactor::new(dim, &step_triplets, options)?,
                    triplets: step_triplets.clone(),
                };
                fresh.solve_refined(dim, &residual)
            }
        };
        let y_next = &y + update * dt;
        z += (&y + &y_next) * (0.5 * dt);
        y = y_next;
        t += dt;
        states.push(DynamicState {
            t,
            z: z.clone(),
            zdot: y.clone(),
        });
    }
    Ok(Trajectory {
        states,
        dt,
        factor_seconds,
        step_seconds: step_started.elapsed().as_secs_f64(),
    })
}

fn combine_step_matrix(e_triplets: &[Triplet], k_triplets: &[Triplet], dt: f64) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(e_triplets.len() + k_triplets.len());
    for &(r, c, v) in e_triplets {
        out.push((r, c, -v));
    }
    let s = 0.25 * dt * dt;
    for &(r, c, v) in k_triplets {
        out.push((r, c, s * v));
    }
    out
}

/// Relative L2-in-time, L2-in-space difference of the displacement fields
/// of two trajectories; the second must resolve the first's steps (its dt
/// divides the first's).
pub fn trajectory_difference(
    op: &DynamicOperator,
    coarse: &Trajectory,
    fine: &Trajectory,
) -> f64 {
    let ratio = (coarse.dt / fine.dt).round() as usize;
    assert!(ratio >= 1);
    assert!(
        ((coarse.dt / fine.dt) - ratio as f64).abs() < 1e-9,
        "fine dt must divide coarse dt"
    );
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, state) in coarse.states.iter().enumerate() {
        let fine_idx = m * ratio;
        if fine_idx >= fine.states.len() {
            break;
        }
        let diff = &state.z - &fine.states[fine_idx].z;
        num += coarse.dt * op.u_l2_norm(&diff).powi(2);
        den += coarse.dt * op.u_l2_norm(&fine.states[fine_idx].z).powi(2);
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// The canonical congruence transformation of the pencil: z = V zhat
/// with V^T E V = diag(0, 0, 0, M, 0) and V^T K V carrying only the blocks
/// (2,2), (3,3), (2,4)/(4,2) and (1,5)/(5,1).
pub struct CanonicalForm {
    pub v: DMatrix<f64>,
    pub v_inv: DMatrix<f64>,
    /// sizes of the five transformed blocks
    pub sizes: [usize; 5],
    pub a22: DMatrix<f64>,
    pub a33: DMatrix<f64>,
    pub b42: DMatrix<f64>,
    pub b51: DMatrix<f64>,
    /// the displacement mass block (unchanged by the transformation)
    pub mass: DMatrix<f64>,
    /// relative congruence residuals against the structured reconstruction
    pub residual_e: f64,
    pub residual_k: f64,
    /// largest entry found in a structurally zero position, relative
    pub zero_pattern_defect: f64,
    pub rank_warnings: Vec<String>,
}

impl CanonicalForm {
    pub fn block_range(&self, idx: usize) -> std::ops::Range<usize> {
        let start: usize = self.sizes[..idx].iter().sum();
        start..start + self.sizes[idx]
    }

    /// zhat = V^{-1} z.
    pub fn transform(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.v_inv * z
    }

    /// Norms of the five transformed components.
    pub fn component_norms(&self, z: &DVector<f64>) -> [f64; 5] {
        let zh = self.transform(z);
        let mut out = [0.0; 5];
        for (i, slot) in out.iter_mut().enumerate() {
            let r = self.block_range(i);
            *slot = zh.rows(r.start, r.len()).norm();
        }
        out
    }

    /// ghat(t) = B42^T M^{-1} F4(t) from a full right-hand-side vector;
    /// F4 equals the displacement rows of F.
    pub fn reduced_forcing(&self, f: &DVector<f64>) -> DVector<f64> {
        let fhat = self.v.transpose() * f;
        let r4 = self.block_range(3);
        let f4 = fhat.rows(r4.start, r4.len()).into_owned();
        let minv_f4 = self
            .mass
            .clone()
            .lu()
            .solve(&f4)
            .expect("mass block is positive definite");
        self.b42.transpose() * minv_f4
    }

    /// The matrix B42^T M^{-1} B42 of the reduced second-order system.
    pub fn reduced_stiffness(&self) -> DMatrix<f64> {
        let minv_b42 = self
            .mass
            .clone()
            .lu()
            .solve(&self.b42)
            .expect("mass block is positive definite");
        self.b42.transpose() * minv_b42
    }

    /// Right-hand side evaluator of the reduced system for zhat_2:
    /// A22 zhat_2'' = -(B42^T M^{-1} B42) zhat_2 + ghat(t).
    pub fn reduced_rhs(&self, z2: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        g - self.reduced_stiffness() * z2
    }

    /// zhat_4 recovered from zhat_2 through the row-2 constraint.
    pub fn z4_from_z2(&self, z2: &DVector<f64>) -> DVector<f64> {
        let rhs = -(&self.a22 * z2);
        self.b42
            .transpose()
            .lu()
            .solve(&rhs)
            .expect("B42 is invertible")
    }

    /// Lifts reduced components back to the full vector:
    /// z = V [0, z2, 0, z4, 0].
    pub fn lift(&self, z2: &DVector<f64>, z4: &DVector<f64>) -> DVector<f64> {
        let total: usize = self.sizes.iter().sum();
        let mut zh = DVector::zeros(total);
        let r2 = self.block_range(1);
        zh.rows_mut(r2.start, r2.len()).copy_from(z2);
        let r4 = self.block_range(3);
        zh.rows_mut(r4.start, r4.len()).copy_from(z4);
        &self.v * zh
    }

    /// Projects a displacement field onto the consistent manifold: returns
    /// (zhat_2, zhat_4, correction norm) with zhat_4 in the range of
    /// B42^{-T} A22 closest to the data and the kernel part of zhat_2 fixed
    /// by the algebraic condition with forcing g.
    pub fn consistent_pair(
        &self,
        u_data: &DVector<f64>,
        g: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, f64), CoreError> {
        let n2 = self.sizes[1];
        // T = -B42^{-T} A22 maps zhat_2 to zhat_4
        let t_map = {
            let sol = self
                .b42
                .transpose()
                .lu()
                .solve(&self.a22)
                .expect("B42 is invertible");
            -sol
        };
        let svd = t_map.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
        let u_mat = svd.u.as_ref().expect("svd with u");
        let vt_mat = svd.v_t.as_ref().expect("svd with v_t");
        // range projection of the data
        let mut z4 = DVector::zeros(n2);
        let mut z2_range = DVector::zeros(n2);
        for (i, sv) in svd.singular_values.iter().enumerate() {
            if *sv > tol {
                let ui = u_mat.column(i);
                let coeff = ui.dot(u_data);
                z4 += ui * coeff;
                // min-norm preimage
                let vi = vt_mat.row(i).transpose();
                z2_range += vi * (coeff / sv);
            }
        }
        // kernel correction of zhat_2 from the algebraic condition
        // N^T (S z2 - g) = 0 with S = B42^T M^{-1} B42
        let kernel_cols: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, sv)| **sv <= tol)
            .map(|(i, _)| i)
            .collect();
        let mut z2 = z2_range;
        if !kernel_cols.is_empty() {
            let mut n_basis = DMatrix::zeros(n2, kernel_cols.len());
            for (j, &i) in kernel_cols.iter().enumerate() {
                n_basis.set_column(j, &vt_mat.row(i).transpose());
            }
            let s_hat = self.reduced_stiffness();
            let nsn = n_basis.transpose() * &s_hat * &n_basis;
            let rhs = n_basis.transpose() * (g - &s_hat * &z2);
            let c = nsn.lu().solve(&rhs).ok_or_else(|| {
                CoreError::Factorization("kernel-projected reduced stiffness singular".into())
            })?;
            z2 += n_basis * c;
        }
        let correction = (&z4 - u_data).norm();
        Ok((z2, z4, correction))
    }
}

/// Builds the canonical form of the pencil (E, K) for the block layout of
/// the assembler, following the two-stage construction: an orthogonal
/// column compression of the constraint block, then block eliminations
/// with the invertible diagonal blocks.
pub fn canonical_form(
    e: &DMatrix<f64>,
    k: &DMatrix<f64>,
    asm: &Assembler,
) -> Result<CanonicalForm, CoreError> {
    let lay = &asm.layout;
    let dim = lay.dim_total();
    assert_eq!(k.nrows(), dim);
    let dim_v = lay.dim_multiplier();
    let dim_m = lay.dim_primal();
    let m_u = lay.group_u().len();
    let m_g = lay.group_omega_vertices().len();
    let mut warnings = Vec::new();

    // stage 1a: compress the (omega, U, Omega) rows of B from the right
    let b_full = k.view((dim_v, 0), (dim_m, dim_v)).into_owned();
    let r2 = b_full.rows(m_u, m_g).into_owned();
    check_rank(&r2, m_g, "constraint rows (omega, U, Omega)", &mut warnings)?;
    let (q1, r_fac) = full_qr(&r2.transpose());
    let b51 = r_fac.rows(0, m_g).transpose().into_owned();

    // stage 1b: compress the remaining displacement-row block
    let c_rows = b_full.rows(0, m_u).into_owned();
    let c_rot = &c_rows * &q1;
    let c2 = c_rot.columns(m_g, dim_v - m_g).into_owned();
    check_rank(&c2, m_u, "displacement constraint rows", &mut warnings)?;
    let (q2, r2_fac) = full_qr(&c2.transpose());
    let b42 = r2_fac.rows(0, m_u).transpose().into_owned();

    let mut v1 = DMatrix::identity(dim_v, dim_v);
    v1.view_mut((0, 0), (dim_v, m_g))
        .copy_from(&q1.columns(0, m_g));
    let tail = q1.columns(m_g, dim_v - m_g) * &q2;
    v1.view_mut((0, m_g), (dim_v, dim_v - m_g)).copy_from(&tail);

    let sizes = [m_g, m_u, dim_v - m_g - m_u, m_u, m_g];
    let mut t_full = DMatrix::identity(dim, dim);
    t_full.view_mut((0, 0), (dim_v, dim_v)).copy_from(&v1);
    let k_tilde = t_full.transpose() * k * &t_full;

    let range = |idx: usize| -> std::ops::Range<usize> {
        let start: usize = sizes[..idx].iter().sum();
        start..start + sizes[idx]
    };
    let block = |m: &DMatrix<f64>, i: usize, j: usize| -> DMatrix<f64> {
        let (ri, rj) = (range(i), range(j));
        m.view((ri.start, rj.start), (ri.len(), rj.len()))
            .into_owned()
    };

    // stage 2a: clear the first block row and column with B51 (column 5
    // only touches block row 1, so nothing else moves)
    let b51_t_lu = b51.transpose().lu();
    let mut v2a = DMatrix::identity(dim, dim);
    let r5 = range(4);
    for j in 0..4 {
        let target = block(&k_tilde, 0, j);
        let y = if j == 0 {
            b51_t_lu
                .solve(&(target * 0.5))
                .ok_or_else(|| CoreError::Factorization("B51 singular".into()))?
        } else {
            b51_t_lu
                .solve(&target)
                .ok_or_else(|| CoreError::Factorization("B51 singular".into()))?
        };
        let rj = range(j);
        v2a.view_mut((r5.start, rj.start), (r5.len(), rj.len()))
            .copy_from(&(-y));
    }
    let k_a = v2a.transpose() * &k_tilde * &v2a;

    // stage 2b: Schur elimination of the (2,3)/(3,2) coupling with A33
    let a33 = block(&k_a, 2, 2);
    let a33_lu = a33.clone().lu();
    let x = a33_lu
        .solve(&block(&k_a, 2, 1))
        .ok_or_else(|| CoreError::Factorization("A33 singular".into()))?;
    let mut v2b = DMatrix::identity(dim, dim);
    let (r3, r2r) = (range(2), range(1));
    v2b.view_mut((r3.start, r2r.start), (r3.len(), r2r.len()))
        .copy_from(&(-&x));
    let v = &t_full * &v2a * &v2b;
    let v_inv = v
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::Factorization("canonical transform singular".into()))?;

    let k_hat = v.transpose() * k * &v;
    let e_hat = v.transpose() * e * &v;
    let a22 = block(&k_hat, 1, 1);
    let a33_final = block(&k_hat, 2, 2);
    let b42_final = block(&k_hat, 3, 1);
    let b51_final = block(&k_hat, 4, 0);
    let mass = block(&e_hat, 3, 3);

    // structured reconstruction and defect measurement
    let mut k_struct = DMatrix::zeros(dim, dim);
    let set = |m: &mut DMatrix<f64>, i: usize, j: usize, val: &DMatrix<f64>| {
        let (ri, rj) = (range(i), range(j));
        m.view_mut((ri.start, rj.start), (ri.len(), rj.len()))
            .copy_from(val);
    };
    set(&mut k_struct, 1, 1, &a22);
    set(&mut k_struct, 2, 2, &a33_final);
    set(&mut k_struct, 3, 1, &b42_final);
    set(&mut k_struct, 1, 3, &b42_final.transpose());
    set(&mut k_struct, 4, 0, &b51_final);
    set(&mut k_struct, 0, 4, &b51_final.transpose());
    let mut e_struct = DMatrix::zeros(dim, dim);
    set(&mut e_struct, 3, 3, &mass);
    let k_scale = k.amax();
    let e_scale = e.amax().max(f64::MIN_POSITIVE);
    let residual_k = (&k_hat - &k_struct).amax() / k_scale;
    let residual_e = (&e_hat - &e_struct).amax() / e_scale;
    let zero_pattern_defect = residual_k.max(residual_e);

    // sanity: the compressed blocks agree with the blocks read off K_hat
    debug_assert!((&b42 - &b42_final).amax() <= 1e-8 * k_scale);
    debug_assert!((&b51 - &b51_final).amax() <= 1e-8 * k_scale);

    Ok(CanonicalForm {
        v,
        v_inv,
        sizes,
        a22,
        a33: a33_final,
        b42: b42_final,
        b51: b51_final,
        mass,
        residual_e,
        residual_k,
        zero_pattern_defect,
        rank_warnings: warnings,
    })
}

/// Verifies that a block has the full row rank the construction needs,
/// recording singular values that fall in the ambiguity band.
fn check_rank(
    m: &DMatrix<f64>,
    expected: usize,
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<(), CoreError> {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let hard = 1e-10 * smax;
    let band_lo = 1e-12 * smax;
    let band_hi = 1e-8 * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > hard).count();
    for s in svd.singular_values.iter() {
        if *s >= band_lo && *s <= band_hi {
            warnings.push(format!(
                "{what}: singular value {s:e} inside ambiguity band [{band_lo:e}, {band_hi:e}]"
            ));
        }
    }
    if rank != expected {
        return Err(CoreError::AmbiguousRank(format!(
            "{what}: numeric rank {rank}, construction needs {expected}"
        )));
    }
    Ok(())
}

/// Integrates the reduced second-order system for zhat_2 with the same
/// midpoint scheme and lifts the trajectory back to full coordinates.
/// Serves as an independent cross-check of the full-system integrator.
pub fn integrate_reduced(
    op: &DynamicOperator,
    canon: &CanonicalForm,
    load: &Load,
    dt: f64,
    steps: usize,
    options: &SolverOptions,
) -> Result<Trajectory, CoreError> {
    let n2 = canon.sizes[1];
    let s_hat = canon.reduced_stiffness();
    // as a pencil: -E' zdd + K' z = F' with E' = A22, K' = -S, F' = -g(t)
    let mut e_trips = Vec::new();
    let mut k_trips = Vec::new();
    for r in 0..n2 {
        for c in 0..n2 {
            let ev = canon.a22[(r, c)];
            if ev != 0.0 {
                e_trips.push((r, c, ev));
            }
            let kv = -s_hat[(r, c)];
            if kv != 0.0 {
                k_trips.push((r, c, kv));
            }
        }
    }
    let rhs = |t: f64| -canon.reduced_forcing(&op.rhs_at(load, t));
    let init = DynamicState {
        t: 0.0,
        z: DVector::zeros(n2),
        zdot: DVector::zeros(n2),
    };
    let reduced = midpoint_integrate(
        n2, &e_trips, &k_trips, &rhs, &init, dt, steps, None, options,
    )?;
    let states = reduced
        .states
        .iter()
        .map(|s| DynamicState {
            t: s.t,
            z: canon.lift(&s.z, &canon.z4_from_z2(&s.z)),
            zdot: canon.lift(&s.zdot, &canon.z4_from_z2(&s.zdot)),
        })
        .collect();
    Ok(Trajectory {
        states,
        dt,
        factor_seconds: reduced.factor_seconds,
        step_seconds: reduced.step_seconds,
    })
}

/// Decodes the displacement and junction values of a dynamic state.
pub fn decode_state(op: &DynamicOperator, state: &DynamicState) -> MixedSolution {
    MixedSolution::decode(&state.z, &op.asm.layout)
}
